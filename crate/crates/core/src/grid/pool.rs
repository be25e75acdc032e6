//! Dispatch of request frames to a set of workers over a transport.

use std::collections::VecDeque;
use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{decode_result, encode, read_frame, write_frame, RequestMsg, ResultMsg};
use super::worker::Executor;
use crate::error::{Error, Result};

/// One live channel to a worker.
pub trait Connection: Send {
    fn call(&mut self, frame: &[u8]) -> Result<Vec<u8>>;
}

pub struct InProc(pub Arc<Executor>);

impl Connection for InProc {
    fn call(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        self.0.handle_frame(frame)
    }
}

/// A child process speaking frames on stdin/stdout.
pub struct Subprocess {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl Subprocess {
    pub fn spawn(program: &PathBuf, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start {}: {e}", program.display())))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }
}

impl Connection for Subprocess {
    fn call(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        write_frame(&mut self.stdin, frame)?;
        read_frame(&mut self.stdout)?.ok_or_else(|| Error::Transport("worker process closed its output".into()))
    }
}

impl Drop for Subprocess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct Tcp {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Tcp {
    pub fn connect(addr: SocketAddr) -> Result<Self> {
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(10))
            .map_err(|e| Error::Transport(format!("cannot reach {addr}: {e}")))?;
        let _ = stream.set_nodelay(true);
        let read_half = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(read_half),
            writer: BufWriter::new(stream),
        })
    }
}

impl Connection for Tcp {
    fn call(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        write_frame(&mut self.writer, frame)?;
        read_frame(&mut self.reader)?.ok_or_else(|| Error::Transport("worker closed the connection".into()))
    }
}

/// Opens a connection for worker slot `slot`; `attempt` counts how many
/// connections that slot has opened before.
pub type Connector = dyn Fn(usize, usize) -> Result<Box<dyn Connection>> + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    /// Tries per request before the path is flagged.
    pub max_attempts: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3 }
    }
}

pub struct WorkerPool {
    connector: Box<Connector>,
    workers: usize,
    retry: RetryPolicy,
}

impl WorkerPool {
    pub fn new(workers: usize, retry: RetryPolicy, connector: Box<Connector>) -> Result<Self> {
        if workers == 0 {
            return Err(Error::invalid("workers", "must be >= 1"));
        }
        if retry.max_attempts == 0 {
            return Err(Error::invalid("retry.max_attempts", "must be >= 1"));
        }
        Ok(Self {
            connector,
            workers,
            retry,
        })
    }

    /// Workers are threads of this process sharing one pricer cache.
    pub fn inproc(workers: usize) -> Result<Self> {
        let exec = Arc::new(Executor::new("inproc"));
        Self::new(
            workers,
            RetryPolicy::default(),
            Box::new(move |_, _| Ok(Box::new(InProc(exec.clone())) as Box<dyn Connection>)),
        )
    }

    /// Each worker is a child process started as `program args...`.
    pub fn subprocess(workers: usize, program: PathBuf, args: Vec<String>) -> Result<Self> {
        Self::new(
            workers,
            RetryPolicy::default(),
            Box::new(move |_, _| Ok(Box::new(Subprocess::spawn(&program, &args)?) as Box<dyn Connection>)),
        )
    }

    /// Worker slot `k` connects to `addrs[k % addrs.len()]`.
    pub fn tcp(workers: usize, addrs: Vec<SocketAddr>) -> Result<Self> {
        if addrs.is_empty() {
            return Err(Error::invalid("transport.addresses", "need at least one worker address"));
        }
        Self::new(
            workers,
            RetryPolicy::default(),
            Box::new(move |slot, _| Ok(Box::new(Tcp::connect(addrs[slot % addrs.len()])?) as Box<dyn Connection>)),
        )
    }

    pub fn with_retry(self, retry: RetryPolicy) -> Result<Self> {
        Self::new(self.workers, retry, self.connector)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Resolves every request and returns the results sorted by path id.
    /// Requests that keep failing in transport come back as error results.
    pub fn run(&self, requests: &[RequestMsg]) -> Result<Vec<ResultMsg>> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let frames: Vec<Vec<u8>> = requests.iter().map(encode).collect::<Result<_>>()?;
        let queue: Mutex<VecDeque<(usize, usize)>> = Mutex::new((0..requests.len()).map(|i| (i, 0)).collect());
        let slots: Mutex<Vec<Option<ResultMsg>>> = Mutex::new(vec![None; requests.len()]);
        let threads = self.workers.min(requests.len());
        std::thread::scope(|scope| {
            for slot in 0..threads {
                let (queue, slots, frames) = (&queue, &slots, &frames);
                scope.spawn(move || {
                    let mut conn: Option<Box<dyn Connection>> = None;
                    let mut opened = 0usize;
                    loop {
                        let Some((idx, attempts)) = queue.lock().unwrap().pop_front() else {
                            break;
                        };
                        let req = &requests[idx];
                        let outcome = (|| -> Result<ResultMsg> {
                            if conn.is_none() {
                                opened += 1;
                                conn = Some((self.connector)(slot, opened - 1)?);
                            }
                            let reply = conn.as_mut().unwrap().call(&frames[idx])?;
                            let msg = decode_result(&reply)?;
                            if msg.path_id != req.path_id {
                                let detail = match &msg.status {
                                    super::protocol::Status::Error { message } => message.clone(),
                                    _ => String::new(),
                                };
                                return Err(Error::Transport(format!(
                                    "reply for path {} while waiting for {}: {detail}",
                                    msg.path_id, req.path_id
                                )));
                            }
                            Ok(msg)
                        })();
                        match outcome {
                            Ok(msg) => {
                                let mut s = slots.lock().unwrap();
                                if s[idx].is_none() {
                                    s[idx] = Some(msg);
                                }
                            }
                            Err(e) => {
                                conn = None;
                                if attempts + 1 < self.retry.max_attempts {
                                    queue.lock().unwrap().push_back((idx, attempts + 1));
                                } else {
                                    let msg = ResultMsg::error(
                                        req.path_id,
                                        "",
                                        format!("gave up after {} attempts: {e}", attempts + 1),
                                    );
                                    slots.lock().unwrap()[idx].get_or_insert(msg);
                                }
                            }
                        }
                    }
                });
            }
        });
        let mut out: Vec<ResultMsg> = slots
            .into_inner()
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.unwrap_or_else(|| ResultMsg::error(requests[i].path_id, "", "never dispatched")))
            .collect();
        out.sort_by_key(|r| r.path_id);
        Ok(out)
    }
}
