#[path = "../bin_support.rs"]
mod common;

use bookstore_services::users;

#[tokio::main]
async fn main() {
    common::init_logging();
    let result = match users::Config::from_env() {
        Ok(config) => users::run(config).await,
        Err(e) => Err(e),
    };
    if let Err(e) = result {
        common::fail("bookstore-users", e, 1);
    }
}
