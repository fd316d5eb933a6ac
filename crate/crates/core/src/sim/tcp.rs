//! Line protocol between a tester and a served simulator.
//!
//! Requests: `INPUT <name>`, `POLL`, `POLL <millis>`, `RESET`, `BYE`.
//! Responses: `OK`, `OUTPUT <name>`, `QUIESCENT`, `ERR <reason>`.
//! Every request gets exactly one response line; outputs are only ever sent
//! as the answer to a poll.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::{Observation, PortError, SimError, Simulator, SutPort, TimeMode};
use crate::aut::{self, AutError};
use crate::iolts::Iolts;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot read model: {0}")]
    Read(#[source] io::Error),
    #[error("cannot parse model: {0}")]
    Parse(#[from] AutError),
    #[error("model rejected: {0}")]
    Invalid(String),
    #[error("cannot bind: {0}")]
    Bind(#[source] io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Serves independent simulator sessions of one model.
pub struct SimServer {
    listener: TcpListener,
    model: Arc<Iolts>,
    mode: TimeMode,
    seed: u64,
    /// Wait applied to a bare `POLL` in wall-clock mode.
    default_poll: Duration,
}

impl SimServer {
    pub fn bind(addr: impl ToSocketAddrs, model: Arc<Iolts>, mode: TimeMode, seed: u64) -> Result<Self, ServeError> {
        // Fail early on models whose simulator cannot even start.
        Simulator::new(model.clone(), mode, seed)?;
        let listener = TcpListener::bind(addr).map_err(ServeError::Bind)?;
        Ok(SimServer { listener, model, mode, seed, default_poll: Duration::from_millis(100) })
    }

    pub fn with_default_poll(mut self, wait: Duration) -> Self {
        self.default_poll = wait;
        self
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, one thread per session. Session `k` gets
    /// simulator seed `seed + k`.
    pub fn serve(self) -> io::Result<()> {
        for (k, stream) in self.listener.incoming().enumerate() {
            let stream = stream?;
            let model = self.model.clone();
            let (mode, wait) = (self.mode, self.default_poll);
            let seed = self.seed.wrapping_add(k as u64);
            thread::spawn(move || {
                // A broken session only affects its own client.
                let _ = run_session(stream, model, mode, seed, wait);
            });
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> io::Result<SocketAddr> {
        let addr = self.local_addr()?;
        thread::spawn(move || self.serve());
        Ok(addr)
    }
}

/// Loads, validates and serves the model at `path`. Blocks.
pub fn serve_tcp(path: &Path, bind: &str, mode: TimeMode, seed: u64) -> Result<(), ServeError> {
    let text = std::fs::read_to_string(path).map_err(ServeError::Read)?;
    let model = aut::parse_aut(&text)?;
    let errors: Vec<String> = model.validate(false).iter().filter(|v| v.is_error()).map(|v| v.to_string()).collect();
    if !errors.is_empty() {
        return Err(ServeError::Invalid(errors.join("; ")));
    }
    let server = SimServer::bind(bind, Arc::new(model), mode, seed)?;
    server.serve().map_err(ServeError::Bind)
}

fn run_session(stream: TcpStream, model: Arc<Iolts>, mode: TimeMode, seed: u64, wait: Duration) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut sim = match Simulator::new(model, mode, seed) {
        Ok(sim) => sim,
        Err(_) => {
            writeln!(writer, "ERR model-defect")?;
            return writer.flush();
        }
    };
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let request = line.trim_end_matches(['\n', '\r']);
        let (reply, done) = respond(&mut sim, request, wait);
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if done {
            return Ok(());
        }
    }
}

fn respond(sim: &mut Simulator, request: &str, wait: Duration) -> (String, bool) {
    let (command, arg) = match request.split_once(' ') {
        Some((c, a)) => (c, Some(a)),
        None => (request, None),
    };
    let reply = match (command, arg) {
        ("INPUT", Some(name)) if !sim.knows_input(name) => "ERR unknown-input".to_string(),
        ("INPUT", Some(name)) => match sim.send(name) {
            Ok(true) => "OK".to_string(),
            Ok(false) => "ERR input-not-enabled".to_string(),
            Err(_) => "ERR model-defect".to_string(),
        },
        ("INPUT", None) => "ERR missing-input".to_string(),
        ("POLL", arg) => {
            let timeout = match arg.map(str::parse::<u64>) {
                None => Ok(wait),
                Some(Ok(ms)) => Ok(Duration::from_millis(ms)),
                Some(Err(_)) => Err(()),
            };
            match timeout {
                Ok(t) => match sim.receive(t) {
                    Observation::Output(name) => format!("OUTPUT {name}"),
                    Observation::Quiescent => "QUIESCENT".to_string(),
                },
                Err(()) => "ERR bad-timeout".to_string(),
            }
        }
        ("RESET", None) => match sim.reset() {
            Ok(()) => "OK".to_string(),
            Err(_) => "ERR model-defect".to_string(),
        },
        ("BYE", None) => return ("OK".to_string(), true),
        ("", None) => "ERR empty-request".to_string(),
        _ => "ERR unknown-command".to_string(),
    };
    (reply, false)
}

/// Client side of the line protocol.
pub struct TcpPort {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    line: String,
}

impl TcpPort {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpPort {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            line: String::new(),
        })
    }

    /// Sends one request line and returns the response line.
    pub fn request(&mut self, request: &str) -> Result<&str, PortError> {
        self.writer.write_all(request.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        self.line.clear();
        if self.reader.read_line(&mut self.line)? == 0 {
            return Err(PortError::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "server closed the connection")));
        }
        Ok(self.line.trim_end_matches(['\n', '\r']))
    }
}

impl SutPort for TcpPort {
    fn send(&mut self, input: &str) -> Result<bool, PortError> {
        match self.request(&format!("INPUT {input}"))? {
            "OK" => Ok(true),
            "ERR input-not-enabled" | "ERR unknown-input" => Ok(false),
            other => Err(PortError::Protocol(other.to_string())),
        }
    }

    fn receive(&mut self, timeout: Duration) -> Result<Observation, PortError> {
        let request = format!("POLL {}", timeout.as_millis());
        let reply = self.request(&request)?;
        if reply == "QUIESCENT" {
            Ok(Observation::Quiescent)
        } else if let Some(name) = reply.strip_prefix("OUTPUT ") {
            Ok(Observation::Output(name.to_string()))
        } else {
            Err(PortError::Protocol(reply.to_string()))
        }
    }

    fn reset(&mut self) -> Result<(), PortError> {
        match self.request("RESET")? {
            "OK" => Ok(()),
            other => Err(PortError::Protocol(other.to_string())),
        }
    }
}

impl Drop for TcpPort {
    fn drop(&mut self) {
        let _ = self.request("BYE");
    }
}
