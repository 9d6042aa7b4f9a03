#[path = "../bin_support.rs"]
mod common;

use bookstore_services::stub;

#[tokio::main]
async fn main() {
    common::init_logging();
    let result = match stub::Config::from_env() {
        Ok(config) => stub::run(config).await,
        Err(e) => Err(e),
    };
    if let Err(e) = result {
        common::fail("bookstore-stub", e, 1);
    }
}
