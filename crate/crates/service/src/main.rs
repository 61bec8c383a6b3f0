use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use registra_service::{router, Store};

#[derive(Parser)]
#[command(name = "registra-service", version, about = "HTTP API for recipes, inspection runs and stats")]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Recipes and runs are stored here.
    #[arg(long, env = "REGISTRA_DATA_DIR", default_value = "registra-data")]
    data_dir: PathBuf,
    /// Built UI bundle to serve for non-API paths.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REGISTRA_LOG", "info")).init();
    let args = Args::parse();
    let store = Arc::new(Store::open(&args.data_dir)?);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} on http://{addr}", args.data_dir.display());
    axum::serve(listener, router(store, args.ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
