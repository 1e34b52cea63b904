//! Starts the refinement API on 127.0.0.1:8080 (or the port given) with a
//! model trained on seeded source phantoms.
//!
//! curl -s -XPOST localhost:8080/sessions -H 'content-type: application/json' -d '{"synthSpec":{"seed":1}}'

use langseg::adapt::{desk_datasets, train_source};
use langseg::classifier::TrainParams;
use langseg::service::{serve, AppState};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let port: u16 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8080);
    let model = train_source(&desk_datasets(20, 0, 0, 7).0, &TrainParams::default()).expect("source trains");
    serve(AppState::new(model, None), ([127, 0, 0, 1], port).into()).await
}
