//! Auxiliary host threads for syscalls that would block the runtime in the
//! host kernel (reads on pipes/stdin). The main loop stays single-owner:
//! workers only return (token, bytes) completions through a queue.

use std::fs::File;
use std::io::Read;
use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};
use std::thread::JoinHandle;

pub struct Completion {
    pub token: u64,
    pub result: Result<Vec<u8>, i64>,
}

enum Job {
    ReadFile { token: u64, file: File, max: usize },
    ReadStdin { token: u64, max: usize },
}

pub struct WorkerPool {
    job_tx: Option<Sender<Job>>,
    done_rx: Receiver<Completion>,
    handles: Vec<JoinHandle<()>>,
    next_token: u64,
    outstanding: usize,
}

const WORKERS: usize = 2;

impl WorkerPool {
    pub fn new() -> Self {
        let (job_tx, job_rx) = channel::<Job>();
        let (done_tx, done_rx) = channel::<Completion>();
        let job_rx = std::sync::Arc::new(std::sync::Mutex::new(job_rx));
        let mut handles = Vec::new();
        for _ in 0..WORKERS {
            let rx = job_rx.clone();
            let tx = done_tx.clone();
            handles.push(std::thread::spawn(move || loop {
                let job = match rx.lock().unwrap().recv() {
                    Ok(j) => j,
                    Err(_) => return,
                };
                let completion = match job {
                    Job::ReadFile { token, mut file, max } => {
                        let mut buf = vec![0u8; max];
                        let result = match file.read(&mut buf) {
                            Ok(n) => {
                                buf.truncate(n);
                                Ok(buf)
                            }
                            Err(_) => Err(-(crate::runtime::errno::EIO)),
                        };
                        Completion { token, result }
                    }
                    Job::ReadStdin { token, max } => {
                        let mut buf = vec![0u8; max];
                        let result = match std::io::stdin().read(&mut buf) {
                            Ok(n) => {
                                buf.truncate(n);
                                Ok(buf)
                            }
                            Err(_) => Err(-(crate::runtime::errno::EIO)),
                        };
                        Completion { token, result }
                    }
                };
                if tx.send(completion).is_err() {
                    return;
                }
            }));
        }
        WorkerPool { job_tx: Some(job_tx), done_rx, handles, next_token: 1, outstanding: 0 }
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding
    }

    pub fn submit_read_file(&mut self, file: File, max: usize) -> u64 {
        let token = self.next_token;
        self.next_token += 1;
        self.outstanding += 1;
        self.job_tx.as_ref().unwrap().send(Job::ReadFile { token, file, max }).expect("worker pool alive");
        token
    }

    pub fn submit_read_stdin(&mut self, max: usize) -> u64 {
        let token = self.next_token;
        self.next_token += 1;
        self.outstanding += 1;
        self.job_tx.as_ref().unwrap().send(Job::ReadStdin { token, max }).expect("worker pool alive");
        token
    }

    pub fn try_complete(&mut self) -> Option<Completion> {
        match self.done_rx.try_recv() {
            Ok(c) => {
                self.outstanding -= 1;
                Some(c)
            }
            Err(TryRecvError::Empty) => None,
            Err(TryRecvError::Disconnected) => None,
        }
    }

    /// Block until one completion arrives (only legal with work outstanding).
    pub fn wait_complete(&mut self) -> Option<Completion> {
        if self.outstanding == 0 {
            return None;
        }
        match self.done_rx.recv() {
            Ok(c) => {
                self.outstanding -= 1;
                Some(c)
            }
            Err(_) => None,
        }
    }
}

impl Default for WorkerPool {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        // Workers exit once the job channel closes; a worker parked in a
        // blocking host read is left to the OS rather than joined.
        self.job_tx.take();
        self.handles.clear();
    }
}
