//! TCP front end. One thread per connection; requests on a connection are
//! answered in order.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, ErrorKind};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use arbor_core::{Engine, Error};
use serde_json::Value as Json;

use crate::config::ServiceConfig;
use crate::error::Result;
use crate::frame::{read_frame, write_frame};
use crate::protocol::{Request, Response};
use crate::session::{error_response, Session};

pub struct Server {
    listener: TcpListener,
    engine: Engine,
    state: Arc<State>,
}

#[derive(Default)]
struct State {
    stopping: AtomicBool,
    next_conn: AtomicU64,
    conns: Mutex<HashMap<u64, TcpStream>>,
}

/// Stops a running [`Server`] from another thread.
#[derive(Clone)]
pub struct ShutdownHandle {
    state: Arc<State>,
    addr: SocketAddr,
}

impl ShutdownHandle {
    /// Stops accepting, lets each connection finish the request it is
    /// working on (including any commit in flight), then returns.
    pub fn shutdown(&self) {
        if self.state.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        let conns = self.state.conns.lock().unwrap();
        for c in conns.values() {
            let _ = c.shutdown(Shutdown::Read);
        }
        drop(conns);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
    }
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A, engine: Engine) -> Result<Server> {
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            engine,
            state: Arc::default(),
        })
    }

    /// Opens the engine described by `config` and binds its listen address.
    pub fn from_config(config: &ServiceConfig) -> Result<Server> {
        config.validate()?;
        let engine = Engine::open(config.engine_config())?;
        Self::bind(config.listen.as_str(), engine)
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle {
            state: self.state.clone(),
            addr: self.listener.local_addr().expect("bound listener"),
        }
    }

    /// Serves until [`ShutdownHandle::shutdown`] is called.
    pub fn run(self) -> Result<()> {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        for stream in self.listener.incoming() {
            if self.state.stopping.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    tracing::warn!("accept failed: {e}");
                    continue;
                }
            };
            let _ = stream.set_nodelay(true);
            let id = self.state.next_conn.fetch_add(1, Ordering::SeqCst);
            if let Ok(c) = stream.try_clone() {
                let mut conns = self.state.conns.lock().unwrap();
                if self.state.stopping.load(Ordering::SeqCst) {
                    let _ = c.shutdown(Shutdown::Read);
                }
                conns.insert(id, c);
            }
            let engine = self.engine.clone();
            let state = self.state.clone();
            workers.retain(|w| !w.is_finished());
            workers.push(std::thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = serve_connection(stream, engine) {
                    tracing::debug!(?peer, "connection closed: {e}");
                }
                state.conns.lock().unwrap().remove(&id);
            }));
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> (ShutdownHandle, JoinHandle<Result<()>>) {
        let h = self.shutdown_handle();
        (h, std::thread::spawn(move || self.run()))
    }
}

fn serve_connection(stream: TcpStream, engine: Engine) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut session = Session::new(engine);
    let send = |w: &mut BufWriter<TcpStream>, r: &Response| {
        let body = serde_json::to_vec(r).expect("response serializes");
        write_frame(w, &body)
    };
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e) if e.kind() == ErrorKind::InvalidData => {
                // The stream cannot be resynchronized after a bad length.
                let _ = send(&mut writer, &error_response(None, &Error::InvalidArgument(e.to_string())));
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        match serde_json::from_slice::<Request>(&frame) {
            Ok(req) => session.handle(req, |r| send(&mut writer, &r))?,
            Err(e) => {
                let id = serde_json::from_slice::<Json>(&frame)
                    .ok()
                    .and_then(|v| v.get("request_id").and_then(Json::as_u64));
                let err = Error::InvalidArgument(format!("malformed request: {e}"));
                send(&mut writer, &error_response(id, &err))?;
            }
        }
    }
}
