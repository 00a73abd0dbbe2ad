//! Ways of running envelopes against a backend while at most `window` are
//! outstanding.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};

use super::BatchEnvelope;
use crate::llm::{Backend, Completion, LlmError};

pub(crate) struct Finished {
    pub envelope: BatchEnvelope,
    pub result: Result<Completion, LlmError>,
    /// Dispatch to completion, as seen by the scheduler.
    pub latency: Duration,
}

pub(crate) trait Dispatcher {
    fn dispatch(&mut self, envelope: BatchEnvelope);
    fn in_flight(&self) -> usize;
    /// Blocks until some outstanding envelope completes.
    fn next_finished(&mut self) -> Finished;
    /// (makespan, busy time) so far.
    fn timing(&self) -> (Duration, Duration);
}

pub(crate) fn call(backend: &dyn Backend, env: &BatchEnvelope) -> Result<Completion, LlmError> {
    if env.requests.len() == 1 {
        backend.invoke(&env.requests[0])
    } else {
        backend.invoke_packed(&env.requests)
    }
}

/// Virtual-clock dispatcher for backends with simulated service times.
type Pending = (BatchEnvelope, Result<Completion, LlmError>, Duration);

/// The server has a fixed number of slots; an envelope starts when it is
/// dispatched or when a slot frees up, whichever is later.
pub(crate) struct SimDispatcher<'a> {
    backend: &'a dyn Backend,
    now: Duration,
    slot_free: Vec<Duration>,
    // (finish, seq) -> pending result
    heap: BinaryHeap<Reverse<(Duration, u64)>>,
    waiting: Vec<Option<Pending>>,
    seq: u64,
    busy: Duration,
    last_finish: Duration,
    outstanding: usize,
}

impl<'a> SimDispatcher<'a> {
    pub fn new(backend: &'a dyn Backend, slots: usize) -> SimDispatcher<'a> {
        SimDispatcher {
            backend,
            now: Duration::ZERO,
            slot_free: vec![Duration::ZERO; slots.max(1)],
            heap: BinaryHeap::new(),
            waiting: Vec::new(),
            seq: 0,
            busy: Duration::ZERO,
            last_finish: Duration::ZERO,
            outstanding: 0,
        }
    }
}

impl Dispatcher for SimDispatcher<'_> {
    fn dispatch(&mut self, envelope: BatchEnvelope) {
        let result = call(self.backend, &envelope);
        // Failed calls occupy no server time.
        let service = result.as_ref().map(|c| c.service_time).unwrap_or(Duration::ZERO);
        let (slot, free) = self.slot_free.iter().copied().enumerate().min_by_key(|(i, t)| (*t, *i)).unwrap();
        let start = free.max(self.now);
        let finish = start + service;
        self.slot_free[slot] = finish;
        self.busy += service;
        self.heap.push(Reverse((finish, self.seq)));
        self.waiting.push(Some((envelope, result, self.now)));
        self.seq += 1;
        self.outstanding += 1;
    }

    fn in_flight(&self) -> usize {
        self.outstanding
    }

    fn next_finished(&mut self) -> Finished {
        let Reverse((finish, seq)) = self.heap.pop().expect("next_finished with nothing in flight");
        let (envelope, result, sent) = self.waiting[seq as usize].take().unwrap();
        self.now = self.now.max(finish);
        self.last_finish = self.last_finish.max(finish);
        self.outstanding -= 1;
        Finished { envelope, result, latency: finish - sent }
    }

    fn timing(&self) -> (Duration, Duration) {
        (self.last_finish, self.busy)
    }
}

type Job = BatchEnvelope;

/// Worker-pool dispatcher for real backends. Workers live in a thread
/// scope owned by the caller.
pub(crate) struct ThreadDispatcher {
    jobs: Option<Sender<(Job, Instant)>>,
    done: Receiver<Finished>,
    outstanding: usize,
    started: Option<Instant>,
    last_finish: Option<Instant>,
    busy: Duration,
    /// Most calls ever inside the backend at once, measured by the workers.
    pub live_peak: Arc<AtomicUsize>,
}

impl ThreadDispatcher {
    pub fn spawn<'scope, 'env>(
        scope: &'scope std::thread::Scope<'scope, 'env>,
        backend: &'env dyn Backend,
        workers: usize,
    ) -> ThreadDispatcher {
        let (job_tx, job_rx) = crossbeam_channel::unbounded::<(Job, Instant)>();
        let (done_tx, done_rx) = crossbeam_channel::unbounded::<Finished>();
        let live = Arc::new(AtomicUsize::new(0));
        let live_peak = Arc::new(AtomicUsize::new(0));
        for _ in 0..workers.max(1) {
            let job_rx = job_rx.clone();
            let done_tx = done_tx.clone();
            let live = live.clone();
            let live_peak = live_peak.clone();
            scope.spawn(move || {
                for (envelope, sent) in job_rx.iter() {
                    let now_live = live.fetch_add(1, Ordering::SeqCst) + 1;
                    live_peak.fetch_max(now_live, Ordering::SeqCst);
                    let result = call(backend, &envelope);
                    live.fetch_sub(1, Ordering::SeqCst);
                    if done_tx.send(Finished { envelope, result, latency: sent.elapsed() }).is_err() {
                        break;
                    }
                }
            });
        }
        ThreadDispatcher {
            jobs: Some(job_tx),
            done: done_rx,
            outstanding: 0,
            started: None,
            last_finish: None,
            busy: Duration::ZERO,
            live_peak,
        }
    }

    /// Closes the job queue so workers exit once idle.
    pub fn close(&mut self) {
        self.jobs = None;
    }
}

impl Drop for ThreadDispatcher {
    fn drop(&mut self) {
        self.close();
    }
}

impl Dispatcher for ThreadDispatcher {
    fn dispatch(&mut self, envelope: BatchEnvelope) {
        let now = Instant::now();
        self.started.get_or_insert(now);
        self.outstanding += 1;
        self.jobs.as_ref().expect("dispatch after close").send((envelope, now)).expect("workers alive");
    }

    fn in_flight(&self) -> usize {
        self.outstanding
    }

    fn next_finished(&mut self) -> Finished {
        let f = self.done.recv().expect("workers alive");
        self.outstanding -= 1;
        self.last_finish = Some(Instant::now());
        if let Ok(c) = &f.result {
            self.busy += c.service_time;
        }
        f
    }

    fn timing(&self) -> (Duration, Duration) {
        let makespan = match (self.started, self.last_finish) {
            (Some(s), Some(e)) => e.duration_since(s),
            _ => Duration::ZERO,
        };
        (makespan, self.busy)
    }
}
