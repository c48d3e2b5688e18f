//! Multi-client TCP ingestion. One thread per connection; every parsed
//! sample is handed to a shared sink under its lock, so samples of one
//! connection reach the sink in arrival order.

use std::io::{BufRead, BufReader, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::error::Result;
use crate::ingest::{is_blank, IngestStats, SampleSink};

const POLL: Duration = Duration::from_millis(20);

pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    stats: Arc<Mutex<IngestStats>>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> IngestStats {
        self.stats.lock().expect("stats lock").clone()
    }

    /// Stop accepting, let idle connections drain and join every thread.
    pub fn shutdown(mut self) -> IngestStats {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        self.stats()
    }

    /// Block until the acceptor exits (it only does on shutdown).
    pub fn wait(mut self) -> IngestStats {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        self.stats()
    }

    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.shutdown)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

/// Bind `endpoint` and start serving in the background.
pub fn serve<S>(endpoint: &str, sink: Arc<Mutex<S>>) -> Result<ServerHandle>
where
    S: SampleSink + Send + 'static,
{
    let listener = TcpListener::bind(endpoint)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(Mutex::new(IngestStats::default()));
    let acceptor = {
        let shutdown = Arc::clone(&shutdown);
        let stats = Arc::clone(&stats);
        std::thread::spawn(move || accept_loop(listener, sink, stats, shutdown))
    };
    log::info!("listening on {addr}");
    Ok(ServerHandle {
        addr,
        shutdown,
        stats,
        acceptor: Some(acceptor),
    })
}

fn accept_loop<S>(
    listener: TcpListener,
    sink: Arc<Mutex<S>>,
    stats: Arc<Mutex<IngestStats>>,
    shutdown: Arc<AtomicBool>,
) where
    S: SampleSink + Send + 'static,
{
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::debug!("connection from {peer}");
                let sink = Arc::clone(&sink);
                let stats = Arc::clone(&stats);
                let shutdown = Arc::clone(&shutdown);
                workers.push(std::thread::spawn(move || {
                    if let Err(e) = handle_connection(stream, &sink, &stats, &shutdown) {
                        log::warn!("connection {peer} closed: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(POLL);
            }
        }
        workers.retain(|w| !w.is_finished());
    }
    // Connections already queued by the kernel are still served.
    while let Ok((stream, _)) = listener.accept() {
        let sink = Arc::clone(&sink);
        let stats = Arc::clone(&stats);
        let shutdown = Arc::clone(&shutdown);
        workers.push(std::thread::spawn(move || {
            let _ = handle_connection(stream, &sink, &stats, &shutdown);
        }));
    }
    for w in workers {
        let _ = w.join();
    }
}

fn handle_connection<S: SampleSink>(
    stream: TcpStream,
    sink: &Mutex<S>,
    stats: &Mutex<IngestStats>,
    shutdown: &AtomicBool,
) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => {
                // EOF; a trailing partial line still counts.
                if !buf.is_empty() && !is_blank(&buf) {
                    deliver(&buf, sink, stats)?;
                }
                return Ok(());
            }
            Ok(_) => {
                if buf.ends_with(b"\n") {
                    if !is_blank(&buf) {
                        deliver(&buf, sink, stats)?;
                    }
                    buf.clear();
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if shutdown.load(Ordering::SeqCst) {
                    return Ok(());
                }
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
}

fn deliver<S: SampleSink>(buf: &[u8], sink: &Mutex<S>, stats: &Mutex<IngestStats>) -> Result<()> {
    let line = String::from_utf8_lossy(buf);
    let parsed = stats.lock().expect("stats lock").record_line(&line);
    let mut sink = sink.lock().expect("sink lock");
    match parsed {
        Some(s) => sink.accept(s),
        None => {
            sink.parse_failure();
            Ok(())
        }
    }
}
