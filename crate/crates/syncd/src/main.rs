use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use roadsense_syncd::server::{self, Server};
use tokio::sync::watch;

/// Package ingestion and sync server.
#[derive(Debug, Parser)]
#[command(name = "syncd", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, default_value = "syncd-data")]
    data_dir: PathBuf,
    /// Largest accepted request body.
    #[arg(long, default_value_t = 16)]
    max_body_mb: usize,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let args = Args::parse();
    if let Err(e) = run(args).await {
        tracing::error!("{e}");
        std::process::exit(3);
    }
}

async fn run(args: Args) -> std::io::Result<()> {
    let (stop, stop_rx) = watch::channel(false);
    let server = Server::open(&args.data_dir, args.max_body_mb * 1024 * 1024, 1024, stop_rx.clone())?;
    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    tokio::spawn(async move {
        let _ = tokio::signal::ctrl_c().await;
        let _ = stop.send(true);
    });
    server::serve(listener, server, stop_rx).await
}
