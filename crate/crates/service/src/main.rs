use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use arise_service::app::SimulateRequest;
use arise_service::config::CONFIG_ENV;
use arise_service::{api, AppState, ServiceConfig};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "arise", version, about = "Hazard reports, PoI scoring, terrain scenarios and artworks")]
struct Cli {
    /// Config file; the ARISE_CONFIG environment variable takes precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `data_dir` from the config.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the HTTP API and the periodic gallery refresh.
    Serve {
        /// Overrides `listen` from the config.
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
    /// Re-reads the review fixture of a use case and recomputes PoI statistics.
    Ingest {
        #[arg(long)]
        use_case: String,
    },
    /// Regenerates missing artworks for the top PoIs of a use case.
    RefreshGallery {
        #[arg(long)]
        use_case: String,
    },
    /// Prints the scenario result for the given indicators as JSON.
    Simulate {
        #[arg(long)]
        use_case: String,
        /// Absolute water level; omit for no water.
        #[arg(long, allow_negative_numbers = true)]
        water_level: Option<f64>,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        temp_delta: f64,
    },
}

fn load_config(cli: &Cli) -> Result<ServiceConfig, String> {
    let path = std::env::var_os(CONFIG_ENV)
        .map(PathBuf::from)
        .or_else(|| cli.config.clone())
        .ok_or_else(|| format!("no config given; pass --config or set {CONFIG_ENV}"))?;
    let mut config = ServiceConfig::load(&path).map_err(|e| e.to_string())?;
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    Ok(config)
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("arise: {e}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("arise: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, config: ServiceConfig) -> anyhow::Result<()> {
    match command {
        Command::Serve { listen } => {
            let addr = listen.unwrap_or(config.listen);
            let state = Arc::new(AppState::open(config)?);
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(serve(state, addr))
        }
        Command::Ingest { use_case } => {
            let state = AppState::open_with(config, false)?;
            print_json(&state.ingest(&use_case)?)
        }
        Command::RefreshGallery { use_case } => {
            let state = AppState::open(config)?;
            print_json(&state.refresh_gallery(&use_case)?)
        }
        Command::Simulate {
            use_case,
            water_level,
            temp_delta,
        } => {
            let state = AppState::open(config)?;
            print_json(&state.simulate(&SimulateRequest {
                use_case,
                water_level,
                temp_delta,
            })?)
        }
    }
}

async fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    println!("listening on http://{local}");
    std::io::stdout().flush()?;

    let scheduler = tokio::spawn(refresh_loop(state.clone()));
    axum::serve(listener, api::router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    scheduler.abort();
    log::info!("shut down");
    Ok(())
}

async fn refresh_loop(state: Arc<AppState>) {
    let period = Duration::from_secs_f64(state.config.refresh_period_h * 3600.0);
    let mut first = true;
    loop {
        if first && !state.config.refresh_on_start {
            tokio::time::sleep(period).await;
        }
        first = false;
        for use_case in state.use_cases.keys().cloned().collect::<Vec<_>>() {
            let s = state.clone();
            let uc = use_case.clone();
            match tokio::task::spawn_blocking(move || s.refresh_gallery(&uc)).await {
                Ok(Ok(delta)) => log::info!(
                    "gallery {use_case}: {} created, {} retained",
                    delta.created,
                    delta.retained
                ),
                Ok(Err(e)) => log::error!("gallery {use_case}: refresh failed: {e}"),
                Err(e) => log::error!("gallery {use_case}: refresh task failed: {e}"),
            }
        }
        tokio::time::sleep(period).await;
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
