use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("age is undefined: source {0} has no delivery inside the observation window")]
    NoDeliveries(usize),
    #[error("observation window [{start}, {end}] is empty")]
    EmptyWindow { start: f64, end: f64 },
    #[error("delivery at {time} does not reduce the age or is out of order")]
    NotAReset { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub time: f64,
    /// Delivery time minus generation time.
    pub system_time: f64,
}

impl Delivery {
    pub fn generated(&self) -> f64 {
        self.time - self.system_time
    }
}

/// Saw-tooth age record of one source at the destination over `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeTrace {
    pub source: usize,
    pub start: f64,
    pub end: f64,
    /// Age at `start`.
    pub initial_age: f64,
    pub deliveries: Vec<Delivery>,
}

impl AgeTrace {
    pub fn new(source: usize, start: f64, end: f64, initial_age: f64) -> Self {
        Self {
            source,
            start,
            end,
            initial_age,
            deliveries: Vec::new(),
        }
    }

    /// Age immediately before `time`, assuming no later deliveries are recorded.
    pub fn age_before(&self, time: f64) -> f64 {
        match self.deliveries.last() {
            Some(d) => time - d.generated(),
            None => self.initial_age + (time - self.start),
        }
    }

    /// Appends a delivery; it must come after the previous one and lower the age.
    pub fn push(&mut self, d: Delivery) -> Result<(), TraceError> {
        let ordered = self.deliveries.last().is_none_or(|p| d.time >= p.time);
        if !ordered || d.time < self.start || !(d.system_time < self.age_before(d.time)) {
            return Err(TraceError::NotAReset { time: d.time });
        }
        self.deliveries.push(d);
        Ok(())
    }

    /// Age at time `t` inside the window.
    pub fn age_at(&self, t: f64) -> f64 {
        let idx = self.deliveries.partition_point(|d| d.time <= t);
        if idx == 0 {
            self.initial_age + (t - self.start)
        } else {
            t - self.deliveries[idx - 1].generated()
        }
    }

    /// Area under the age curve: the head polygon up to the first delivery,
    /// one trapezoid per later update, and the tail after the last delivery.
    pub fn area(&self) -> Result<f64, TraceError> {
        if !(self.end > self.start) {
            return Err(TraceError::EmptyWindow {
                start: self.start,
                end: self.end,
            });
        }
        let (first, last) = match (self.deliveries.first(), self.deliveries.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(TraceError::NoDeliveries(self.source)),
        };
        let lead = first.time - self.start;
        let head = self.initial_age * lead + 0.5 * lead * lead;
        let trapezoids: f64 = self
            .deliveries
            .windows(2)
            .map(|w| {
                let gap = w[1].generated() - w[0].generated();
                let k = w[1].system_time;
                0.5 * (gap + k).powi(2) - 0.5 * k * k
            })
            .sum();
        let rest = self.end - last.time;
        let tail = last.system_time * rest + 0.5 * rest * rest;
        let k1 = first.system_time;
        let kn = last.system_time;
        Ok(head + trapezoids + 0.5 * kn * kn - 0.5 * k1 * k1 + tail)
    }

    pub fn time_average_age(&self) -> Result<f64, TraceError> {
        Ok(self.area()? / (self.end - self.start))
    }
}

/// Writes `delivery_time,system_time,source` rows for every trace.
pub fn write_traces_csv<W: Write>(mut out: W, traces: &[AgeTrace]) -> io::Result<()> {
    writeln!(out, "delivery_time,system_time,source")?;
    for t in traces {
        for d in &t.deliveries {
            writeln!(out, "{},{},{}", d.time, d.system_time, t.source)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(deliveries: &[(f64, f64)], end: f64) -> AgeTrace {
        let mut t = AgeTrace::new(0, 0.0, end, 0.0);
        for &(time, k) in deliveries {
            t.push(Delivery { time, system_time: k }).unwrap();
        }
        t
    }

    /// Midpoint rule on a uniform grid.
    fn brute_force(t: &AgeTrace, cells: usize) -> f64 {
        let h = (t.end - t.start) / cells as f64;
        let mut next = 0;
        let mut last_gen = t.start - t.initial_age;
        let mut sum = 0.0;
        for i in 0..cells {
            let x = t.start + (i as f64 + 0.5) * h;
            while next < t.deliveries.len() && t.deliveries[next].time <= x {
                last_gen = t.deliveries[next].generated();
                next += 1;
            }
            sum += x - last_gen;
        }
        sum * h
    }

    #[test]
    fn single_trapezoid() {
        // second update: generation gap 1, system time 1
        let t = trace(&[(1.0, 0.5), (2.5, 1.0)], 2.5);
        let q = 0.5 * (1.0f64 + 1.0).powi(2) - 0.5;
        assert_eq!(q, 1.5);
        let head = 0.5;
        let expected = head + q + 0.5 - 0.125;
        assert!((t.area().unwrap() - expected).abs() < 1e-15);
        // direct: triangle to t = 1, then a trapezoid from age 0.5 to 2
        assert!((expected - (0.5 + 1.5 * (0.5 + 2.0) / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn periodic_deliveries_approach_k_plus_half_r() {
        let (r, k) = (0.7, 0.4);
        let n = 200_000;
        let deliveries: Vec<_> = (1..=n).map(|i| (i as f64 * r + k, k)).collect();
        let t = trace(&deliveries, n as f64 * r + k);
        let avg = t.time_average_age().unwrap();
        assert!((avg - (k + r / 2.0)).abs() < 1e-4);
    }

    #[test]
    fn rejects_stale_delivery() {
        let mut t = trace(&[(2.0, 0.5)], 5.0);
        let stale = Delivery {
            time: 2.5,
            system_time: 1.5,
        };
        assert!(t.push(stale).is_err());
        assert!(t.push(Delivery { time: 1.0, system_time: 0.1 }).is_err());
    }

    #[test]
    fn empty_trace_has_no_age() {
        let t = AgeTrace::new(3, 0.0, 1.0, 0.0);
        assert_eq!(t.time_average_age(), Err(TraceError::NoDeliveries(3)));
    }

    #[test]
    fn csv_dump() {
        let t = trace(&[(1.0, 0.5)], 2.0);
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &[t]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "delivery_time,system_time,source\n1,0.5,0\n"
        );
    }

    proptest! {
        #[test]
        fn area_matches_brute_force(
            steps in proptest::collection::vec((0.05f64..2.0, 0.01f64..1.5), 1..12),
            initial in 0.0f64..2.0,
            tail in 0.0f64..2.0,
        ) {
            let mut t = AgeTrace::new(0, 0.0, 0.0, initial);
            let mut gen = -initial;
            let mut last_time = 0.0;
            for (gap, k) in steps {
                gen += gap;
                let time = (gen + k).max(last_time + 1e-3);
                let d = Delivery { time, system_time: time - gen };
                if t.push(d).is_ok() {
                    last_time = time;
                }
            }
            prop_assume!(!t.deliveries.is_empty());
            t.end = last_time + tail + 1e-3;
            let exact = t.area().unwrap();
            let approx = brute_force(&t, 200_000);
            prop_assert!((exact - approx).abs() / exact < 1e-4);
        }
    }
}
