//! Arrival/departure traces: Poisson arrivals, exponential holding times.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psn::Psn;
use crate::slice::{generate_nspr, Nspr, NsprError, NsprId, NsprParams, SimTime, TICKS_PER_UNIT};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Arrival { nspr: Nspr },
    Departure { id: NsprId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub t: SimTime,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn nspr_id(&self) -> NsprId {
        match &self.kind {
            EventKind::Arrival { nspr } => nspr.id,
            EventKind::Departure { id } => *id,
        }
    }

    /// Departures sort before arrivals at equal time, then by slice id.
    fn order_key(&self) -> (SimTime, u8, NsprId) {
        let rank = match self.kind {
            EventKind::Departure { .. } => 0,
            EventKind::Arrival { .. } => 1,
        };
        (self.t, rank, self.nspr_id())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTrace {
    pub events: Vec<Event>,
    pub horizon: SimTime,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("arrival rate must be finite and non-negative, got {0}")]
    Rate(f64),
    #[error("horizon must be positive")]
    Horizon,
    #[error(transparent)]
    Nspr(#[from] NsprError),
    #[error("event {0} is out of order")]
    Unsorted(usize),
    #[error("event {index}: {reason}")]
    Pairing { index: usize, reason: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing horizon header line")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: HeaderKind,
    t: SimTime,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum HeaderKind {
    Horizon,
}

/// Generates a trace whose arrivals form a Poisson process of
/// `arrival_rate` requests per time unit over `[0, horizon)` ticks. Every
/// arrival is paired with its departure, even past the horizon.
pub fn generate_trace(
    params: &NsprParams,
    arrival_rate: f64,
    horizon: SimTime,
    psn: &Psn,
    seed: u64,
) -> Result<EventTrace, TraceError> {
    if !(arrival_rate.is_finite() && arrival_rate >= 0.0) {
        return Err(TraceError::Rate(arrival_rate));
    }
    if horizon == 0 {
        return Err(TraceError::Horizon);
    }
    params.validate()?;
    let mut events = Vec::new();
    if arrival_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gap = Exp::new(arrival_rate).expect("positive rate");
        let mut clock_units = 0.0f64;
        let mut next_id = 0u64;
        loop {
            clock_units += gap.sample(&mut rng);
            let t = (clock_units * TICKS_PER_UNIT as f64).round() as SimTime;
            if t >= horizon {
                break;
            }
            let nspr = generate_nspr(params, psn, NsprId(next_id), t, &mut rng)?;
            next_id += 1;
            events.push(Event {
                t: nspr.departure_time(),
                kind: EventKind::Departure { id: nspr.id },
            });
            events.push(Event {
                t,
                kind: EventKind::Arrival { nspr },
            });
        }
    }
    events.sort_by_key(Event::order_key);
    Ok(EventTrace { events, horizon })
}

impl EventTrace {
    pub fn arrivals(&self) -> impl Iterator<Item = &Nspr> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Arrival { nspr } => Some(nspr),
            EventKind::Departure { .. } => None,
        })
    }

    pub fn arrival_count(&self) -> usize {
        self.arrivals().count()
    }

    pub fn last_time(&self) -> SimTime {
        self.events.last().map_or(0, |e| e.t)
    }

    /// Extends the horizon so every departure falls inside it.
    pub fn drain_horizon(mut self) -> Self {
        self.horizon = self.horizon.max(self.last_time());
        self
    }

    /// Checks ordering and arrival/departure pairing.
    pub fn check(&self) -> Result<(), TraceError> {
        for (i, w) in self.events.windows(2).enumerate() {
            if w[0].order_key() > w[1].order_key() {
                return Err(TraceError::Unsorted(i + 1));
            }
        }
        let mut open: HashMap<NsprId, SimTime> = HashMap::new();
        let mut closed = 0usize;
        for (index, e) in self.events.iter().enumerate() {
            let fail = |reason: String| Err(TraceError::Pairing { index, reason });
            match &e.kind {
                EventKind::Arrival { nspr } => {
                    if nspr.arrival_time != e.t {
                        return fail(format!("arrival time {} != event time", nspr.arrival_time));
                    }
                    if let Err(err) = nspr.validate() {
                        return fail(err.to_string());
                    }
                    if open.insert(nspr.id, nspr.departure_time()).is_some() {
                        return fail(format!("duplicate arrival of {}", nspr.id));
                    }
                }
                EventKind::Departure { id } => match open.remove(id) {
                    Some(due) if due == e.t => closed += 1,
                    Some(due) => return fail(format!("{id} departs at {} not {due}", e.t)),
                    None => return fail(format!("{id} departs before arriving")),
                },
            }
        }
        if let Some(id) = open.keys().min() {
            return Err(TraceError::Pairing {
                index: self.events.len(),
                reason: format!("{id} never departs ({closed} paired)"),
            });
        }
        Ok(())
    }

    /// JSON Lines: a horizon header, then one event per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        let header = Header {
            kind: HeaderKind::Horizon,
            t: self.horizon,
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
            Ok(l) => !l.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines.next().ok_or(TraceError::MissingHeader)?;
        let header: Header =
            serde_json::from_str(&first?).map_err(|_| TraceError::MissingHeader)?;
        let mut events = Vec::new();
        for (i, line) in lines {
            let e: Event = serde_json::from_str(&line?)
                .map_err(|source| TraceError::Parse { line: i + 1, source })?;
            events.push(e);
        }
        Ok(EventTrace {
            events,
            horizon: header.t,
        })
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }
}
