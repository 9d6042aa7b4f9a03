#[path = "../bin_support.rs"]
mod common;

use bookstore_services::books;

#[tokio::main]
async fn main() {
    common::init_logging();
    let result = match books::Config::from_env() {
        Ok(config) => books::run(config).await,
        Err(e) => Err(e),
    };
    if let Err(e) = result {
        common::fail("bookstore-books", e, 1);
    }
}
