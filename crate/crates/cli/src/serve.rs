use std::io::Write;
use std::sync::Arc;

use tdguard_session::{router, SessionService};

use crate::{exit, Failure, ServeArgs};

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
        _ = ctrl_c => {},
        _ = term => {},
    }
}

pub fn run(args: ServeArgs) -> Result<(), Failure> {
    let service = SessionService::open(&args.data_dir)
        .map_err(|e| Failure::new(exit::FAILURE, format!("{}: {e}", args.data_dir.display())))?;
    if service.recovered_bytes() > 0 {
        eprintln!("recovered: dropped {} bytes of torn log tails", service.recovered_bytes());
    }
    let app = router(Arc::new(service), args.static_dir.clone());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await.map_err(|e| {
            let code = if e.kind() == std::io::ErrorKind::AddrInUse { exit::PORT_BUSY } else { exit::FAILURE };
            Failure::new(code, format!("cannot bind {}:{}: {e}", args.host, args.port))
        })?;
        let addr = listener.local_addr()?;
        // Scripts read the bound address from this line (useful with --port 0).
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await?;
        Ok(())
    })
}
