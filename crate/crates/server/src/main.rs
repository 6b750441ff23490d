use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use robomem_server::{router, ServerConfig, Service};

/// Serves the robomem JSON API.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// TOML config file; `ROBOMEM_*` variables override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let config = match &args.config {
        Some(path) => ServerConfig::from_file(path)?,
        None => ServerConfig::default(),
    }
    .with_env(|k| std::env::var(k).ok())?;
    std::fs::create_dir_all(&config.store_root)
        .with_context(|| format!("cannot create {}", config.store_root.display()))?;

    let service = Arc::new(Service::new(config.store_root.clone(), config.recall()));
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .with_context(|| format!("cannot bind {}", config.bind))?;
    eprintln!(
        "robomem-server listening on {} (store {})",
        listener.local_addr()?,
        config.store_root.display()
    );
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
