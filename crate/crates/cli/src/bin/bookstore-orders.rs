#[path = "../bin_support.rs"]
mod common;

use bookstore_services::orders;

#[tokio::main]
async fn main() {
    common::init_logging();
    let result = match orders::Config::from_env() {
        Ok(config) => orders::run(config).await,
        Err(e) => Err(e),
    };
    if let Err(e) = result {
        common::fail("bookstore-orders", e, 1);
    }
}
