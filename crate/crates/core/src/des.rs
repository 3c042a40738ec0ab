//! Discrete-event simulation of the full B-RAN pipeline: arrival, block
//! inclusion in batches of up to `k`, `N` confirmations, then service by `s`
//! parallel links.
//!
//! The engine is a single event calendar with exponential inter-event times.
//! Blocks are mined at rate `lambda_b` whether or not requests are pending:
//! empty blocks still count as confirmations, which keeps the confirmation
//! delay load-independent. Runs are reproducible bit for bit from the seed;
//! each stochastic process draws from its own counter-based substream, and
//! exponential variates come from the inverse CDF.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{validate, InvalidParam, SystemParams};

#[derive(Debug, Error)]
pub enum DesError {
    #[error(transparent)]
    InvalidParam(#[from] InvalidParam),
    #[error("i/o error writing records: {0}")]
    Io(#[from] std::io::Error),
}

/// Which end of the pending queue a rejection event removes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RejectionOrder {
    /// Drop the newest arrivals; survivors keep FIFO latency semantics.
    #[default]
    Newest,
    /// Drop the oldest arrivals.
    Oldest,
}

/// One simulation run's configuration.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub params: SystemParams,
    /// Total requests to generate.
    pub num_arrivals: u64,
    /// Fraction of the earliest serviced requests excluded from statistics.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub rejection_order: RejectionOrder,
    /// Batch count for the batch-means confidence interval.
    pub batches: u32,
    /// Keep and return per-request records and block epochs.
    pub collect_records: bool,
}

impl SimConfig {
    pub fn new(params: SystemParams, num_arrivals: u64, seed: u64) -> Self {
        Self {
            params,
            num_arrivals,
            warmup_fraction: 0.1,
            seed,
            rejection_order: RejectionOrder::default(),
            batches: 32,
            collect_records: false,
        }
    }

    fn validate(&self) -> Result<(), InvalidParam> {
        validate(&self.params)?;
        if self.num_arrivals < 1 {
            return Err(InvalidParam::new("num_arrivals", "must be >= 1"));
        }
        if !(0.0..=0.9).contains(&self.warmup_fraction) {
            return Err(InvalidParam::new("warmup_fraction", "must be in [0, 0.9]"));
        }
        if self.batches < 20 {
            return Err(InvalidParam::new("batches", "must be >= 20"));
        }
        Ok(())
    }
}

/// Event timestamps of one request. Fields from `t_mined` on are absent for
/// rejected requests (and `rejected` is set instead).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestRecord {
    pub t_arrival: f64,
    pub t_mined: Option<f64>,
    pub t_confirmed: Option<f64>,
    pub t_service_start: Option<f64>,
    pub t_service_end: Option<f64>,
    pub rejected: bool,
}

/// Mean duration of each pipeline phase over the measured requests.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseMeans {
    /// Arrival to own-block mining.
    pub inclusion_wait: f64,
    /// Own-block mining to the `N`th confirmation.
    pub confirmation_wait: f64,
    /// Confirmation to service start.
    pub service_wait: f64,
    /// Service start to completion.
    pub service_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub arrived: u64,
    pub serviced: u64,
    pub rejected: u64,
    /// Requests still in the pipeline when the run stopped. The run drains
    /// naturally, so this is zero unless draining was impossible.
    pub in_flight: u64,
}

/// Aggregate statistics of one run.
///
/// `mean_latency` is arrival to service start; `mean_sojourn` additionally
/// includes the service time. Confidence half-widths come from the
/// batch-means method. Means are NaN when nothing was measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimStats {
    pub mean_latency: f64,
    pub mean_sojourn: f64,
    pub phase_means: PhaseMeans,
    /// 95% half-width for `mean_latency`.
    pub ci95_halfwidth: f64,
    /// 95% half-width for `mean_sojourn`.
    pub sojourn_ci95_halfwidth: f64,
    pub counts: Counts,
    /// Serviced requests that survived the warm-up cut.
    pub measured: u64,
    /// False when fewer than 1000 post-warmup requests back the statistics.
    pub reliable: bool,
    /// Simulated time at which the run drained.
    pub horizon: f64,
    /// Serviced requests per unit time over the whole run.
    pub throughput: f64,
}

/// Full output of a run; records and block epochs are kept only when
/// [`SimConfig::collect_records`] is set.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub stats: SimStats,
    pub records: Option<Vec<RequestRecord>>,
    pub block_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival,
    BlockMined,
    Rejection,
    ServiceEnd { req: u64 },
}

#[derive(Debug, Clone, Copy)]
struct HeapEvent {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for HeapEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for HeapEvent {}
impl PartialOrd for HeapEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEvent {
    // Reversed: BinaryHeap is a max-heap, we want the earliest event first.
    // Ties break on insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .partial_cmp(&self.time)
            .expect("event times are never NaN")
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Inverse-CDF exponential variate.
fn sample_exp(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct MinedBlock {
    index: u64,
    requests: Vec<u64>,
}

struct Engine {
    params: SystemParams,
    config: SimConfig,
    clock: f64,
    seq: u64,
    calendar: BinaryHeap<HeapEvent>,
    arrivals_rng: ChaCha8Rng,
    blocks_rng: ChaCha8Rng,
    rejections_rng: ChaCha8Rng,
    services_rng: ChaCha8Rng,
    arrivals_generated: u64,
    pending: VecDeque<u64>,
    /// Mined, unconfirmed request-bearing blocks in mining order.
    unconfirmed: VecDeque<MinedBlock>,
    blocks_mined: u64,
    confirmed_queue: VecDeque<u64>,
    busy_links: u32,
    records: Vec<RequestRecord>,
    block_times: Vec<f64>,
}

impl Engine {
    fn new(config: SimConfig) -> Self {
        Self {
            params: config.params,
            config,
            clock: 0.0,
            seq: 0,
            calendar: BinaryHeap::new(),
            arrivals_rng: substream(config.seed, 0),
            blocks_rng: substream(config.seed, 1),
            rejections_rng: substream(config.seed, 2),
            services_rng: substream(config.seed, 3),
            arrivals_generated: 0,
            pending: VecDeque::new(),
            unconfirmed: VecDeque::new(),
            blocks_mined: 0,
            confirmed_queue: VecDeque::new(),
            busy_links: 0,
            records: Vec::with_capacity(config.num_arrivals.min(1 << 24) as usize),
            block_times: Vec::new(),
        }
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        let event = HeapEvent {
            time,
            seq: self.seq,
            kind,
        };
        self.seq += 1;
        self.calendar.push(event);
    }

    fn schedule_next_arrival(&mut self) {
        if self.arrivals_generated < self.config.num_arrivals && self.params.lambda_a > 0.0 {
            let dt = sample_exp(&mut self.arrivals_rng, self.params.lambda_a);
            self.schedule(self.clock + dt, EventKind::Arrival);
        }
    }

    fn schedule_next_block(&mut self) {
        let dt = sample_exp(&mut self.blocks_rng, self.params.lambda_b);
        self.schedule(self.clock + dt, EventKind::BlockMined);
    }

    fn schedule_next_rejection(&mut self) {
        if self.params.lambda_r > 0.0 {
            let dt = sample_exp(&mut self.rejections_rng, self.params.lambda_r);
            self.schedule(self.clock + dt, EventKind::Rejection);
        }
    }

    fn drained(&self) -> bool {
        let arrivals_done =
            self.arrivals_generated == self.config.num_arrivals || self.params.lambda_a == 0.0;
        arrivals_done
            && self.pending.is_empty()
            && self.unconfirmed.is_empty()
            && self.confirmed_queue.is_empty()
            && self.busy_links == 0
    }

    fn on_arrival(&mut self) {
        let req = self.records.len() as u64;
        self.records.push(RequestRecord {
            t_arrival: self.clock,
            t_mined: None,
            t_confirmed: None,
            t_service_start: None,
            t_service_end: None,
            rejected: false,
        });
        self.pending.push_back(req);
        self.arrivals_generated += 1;
        self.schedule_next_arrival();
    }

    fn on_block_mined(&mut self) {
        self.blocks_mined += 1;
        if self.config.collect_records {
            self.block_times.push(self.clock);
        }
        let batch = self.pending.len().min(self.params.k as usize);
        if batch > 0 {
            let requests: Vec<u64> = self.pending.drain(..batch).collect();
            for &req in &requests {
                self.records[req as usize].t_mined = Some(self.clock);
            }
            self.unconfirmed.push_back(MinedBlock {
                index: self.blocks_mined,
                requests,
            });
        }
        // A block is confirmed once N - 1 further blocks exist.
        let extra = u64::from(self.params.n_conf - 1);
        while self
            .unconfirmed
            .front()
            .is_some_and(|b| b.index + extra <= self.blocks_mined)
        {
            let block = self.unconfirmed.pop_front().unwrap();
            for req in block.requests {
                self.records[req as usize].t_confirmed = Some(self.clock);
                self.confirmed_queue.push_back(req);
            }
        }
        self.admit_to_service();
        self.schedule_next_block();
    }

    fn on_rejection(&mut self) {
        let drop_count = self.pending.len().min(self.params.r as usize);
        for _ in 0..drop_count {
            let req = match self.config.rejection_order {
                RejectionOrder::Newest => self.pending.pop_back().unwrap(),
                RejectionOrder::Oldest => self.pending.pop_front().unwrap(),
            };
            self.records[req as usize].rejected = true;
        }
        self.schedule_next_rejection();
    }

    fn on_service_end(&mut self, req: u64) {
        self.records[req as usize].t_service_end = Some(self.clock);
        self.busy_links -= 1;
        self.admit_to_service();
    }

    fn admit_to_service(&mut self) {
        while self.busy_links < self.params.s {
            let Some(req) = self.confirmed_queue.pop_front() else {
                break;
            };
            self.records[req as usize].t_service_start = Some(self.clock);
            self.busy_links += 1;
            let duration = sample_exp(&mut self.services_rng, self.params.lambda_c);
            self.schedule(self.clock + duration, EventKind::ServiceEnd { req });
        }
    }

    fn run(mut self) -> SimOutput {
        if self.params.lambda_a > 0.0 {
            self.schedule_next_arrival();
            self.schedule_next_block();
            self.schedule_next_rejection();
        }
        while !self.drained() {
            let event = self
                .calendar
                .pop()
                .expect("calendar never starves before draining");
            debug_assert!(event.time >= self.clock, "event time went backwards");
            self.clock = event.time;
            match event.kind {
                EventKind::Arrival => self.on_arrival(),
                EventKind::BlockMined => self.on_block_mined(),
                EventKind::Rejection => self.on_rejection(),
                EventKind::ServiceEnd { req } => self.on_service_end(req),
            }
        }
        let stats = summarize(&self.records, &self.config, self.clock);
        SimOutput {
            stats,
            records: self.config.collect_records.then_some(self.records),
            block_times: self.config.collect_records.then_some(self.block_times),
        }
    }
}

/// Runs one simulation to completion.
///
/// The run stops once every generated request is serviced or rejected, so
/// the statistics cover the whole population. Batch-unstable parameters only
/// produce a warning; the run still terminates because arrivals stop.
pub fn run(config: &SimConfig) -> Result<SimOutput, DesError> {
    config.validate()?;
    let stability = validate(&config.params)?;
    if !stability.batch_stable {
        log::warn!(
            "parameters are not batch-stable (lambda_a exceeds drain capacity); queues grow until arrivals stop"
        );
    }
    Ok(Engine::new(*config).run())
}

fn summarize(records: &[RequestRecord], config: &SimConfig, horizon: f64) -> SimStats {
    let arrived = records.len() as u64;
    let rejected = records.iter().filter(|r| r.rejected).count() as u64;

    // Measurement order is service order, not arrival order.
    let mut serviced: Vec<&RequestRecord> = records
        .iter()
        .filter(|r| r.t_service_end.is_some())
        .collect();
    serviced.sort_by(|a, b| {
        a.t_service_start
            .partial_cmp(&b.t_service_start)
            .expect("timestamps are never NaN")
    });
    let serviced_count = serviced.len() as u64;
    let in_flight = arrived - serviced_count - rejected;

    let warmup = (config.warmup_fraction * serviced.len() as f64).floor() as usize;
    let measured = &serviced[warmup.min(serviced.len())..];

    let counts = Counts {
        arrived,
        serviced: serviced_count,
        rejected,
        in_flight,
    };

    let throughput = if horizon > 0.0 {
        serviced_count as f64 / horizon
    } else {
        0.0
    };

    if measured.is_empty() {
        return SimStats {
            mean_latency: f64::NAN,
            mean_sojourn: f64::NAN,
            phase_means: PhaseMeans::default(),
            ci95_halfwidth: f64::NAN,
            sojourn_ci95_halfwidth: f64::NAN,
            counts,
            measured: 0,
            reliable: false,
            horizon,
            throughput,
        };
    }

    let latencies: Vec<f64> = measured
        .iter()
        .map(|r| r.t_service_start.unwrap() - r.t_arrival)
        .collect();
    let sojourns: Vec<f64> = measured
        .iter()
        .map(|r| r.t_service_end.unwrap() - r.t_arrival)
        .collect();

    let mut phases = PhaseMeans::default();
    for r in measured {
        phases.inclusion_wait += r.t_mined.unwrap() - r.t_arrival;
        phases.confirmation_wait += r.t_confirmed.unwrap() - r.t_mined.unwrap();
        phases.service_wait += r.t_service_start.unwrap() - r.t_confirmed.unwrap();
        phases.service_time += r.t_service_end.unwrap() - r.t_service_start.unwrap();
    }
    let n = measured.len() as f64;
    phases.inclusion_wait /= n;
    phases.confirmation_wait /= n;
    phases.service_wait /= n;
    phases.service_time /= n;

    SimStats {
        mean_latency: mean(&latencies),
        mean_sojourn: mean(&sojourns),
        phase_means: phases,
        ci95_halfwidth: batch_means_ci95(&latencies, config.batches),
        sojourn_ci95_halfwidth: batch_means_ci95(&sojourns, config.batches),
        counts,
        measured: measured.len() as u64,
        reliable: measured.len() >= 1000,
        horizon,
        throughput,
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// 95% half-width of the mean from non-overlapping batch means, which
/// absorbs the serial correlation of queueing output.
fn batch_means_ci95(values: &[f64], batches: u32) -> f64 {
    let b = batches as usize;
    let batch_size = values.len() / b;
    if batch_size == 0 {
        return f64::NAN;
    }
    let batch_means: Vec<f64> = (0..b)
        .map(|i| mean(&values[i * batch_size..(i + 1) * batch_size]))
        .collect();
    let grand = mean(&batch_means);
    let var = batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    let t = StudentsT::new(0.0, 1.0, b as f64 - 1.0)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    t * (var / b as f64).sqrt()
}

/// Writes the record stream as CSV. Absent timestamps are empty fields.
pub fn write_records_csv<W: Write>(records: &[RequestRecord], out: &mut W) -> Result<(), DesError> {
    writeln!(
        out,
        "req_id,t_arrival,t_mined,t_confirmed,t_service_start,t_service_end,rejected"
    )?;
    let fmt = |v: Option<f64>| v.map(|t| format!("{t:.15}")).unwrap_or_default();
    for (id, r) in records.iter().enumerate() {
        writeln!(
            out,
            "{},{:.15},{},{},{},{},{}",
            id,
            r.t_arrival,
            fmt(r.t_mined),
            fmt(r.t_confirmed),
            fmt(r.t_service_start),
            fmt(r.t_service_end),
            r.rejected
        )?;
    }
    Ok(())
}
