#[path = "../bin_support.rs"]
mod common;

use bookstore_services::datastore;

#[tokio::main]
async fn main() {
    common::init_logging();
    let result = match datastore::Config::from_env() {
        Ok(config) => datastore::run(config).await,
        Err(e) => Err(e),
    };
    if let Err(e) = result {
        common::fail("bookstore-datastore", e, 1);
    }
}
