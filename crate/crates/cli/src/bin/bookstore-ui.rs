#[path = "../bin_support.rs"]
mod common;

use bookstore_services::ui;

#[tokio::main]
async fn main() {
    common::init_logging();
    let result = match ui::Config::from_env() {
        Ok(config) => ui::run(config).await,
        Err(e) => Err(e),
    };
    if let Err(e) = result {
        common::fail("bookstore-ui", e, 1);
    }
}
