//! Age of Information bookkeeping.
//!
//! `AoI(t) = t - I(t)` where `I(t)` is the generation time of the freshest
//! accepted update. Before the first delivery `I(t) = 0`. An arriving update
//! is accepted only if its age is smaller than the current AoI.

use crate::constellation::SimClock;
use crate::error::{Result, SimError};
use crate::netsim::DeliveryRecord;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AoiTimeline {
    deliveries: Vec<DeliveryRecord>,
    accepted: Vec<DeliveryRecord>,
    superseded: Vec<u64>,
}

impl AoiTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// `I(t)` immediately after the accepted deliveries so far.
    pub fn latest_generation(&self) -> f64 {
        self.accepted.last().map_or(0.0, |r| r.generation_time)
    }

    /// AoI just before an arrival at `t`.
    pub fn current_aoi(&self, t: f64) -> f64 {
        t - self.latest_generation()
    }

    /// Applies the obsolete-update rule. Records must arrive in completion order.
    pub fn accept_delivery(&mut self, rec: DeliveryRecord) -> bool {
        debug_assert!(rec.completion_time >= rec.generation_time);
        debug_assert!(self
            .deliveries
            .last()
            .is_none_or(|p| p.completion_time <= rec.completion_time));
        self.deliveries.push(rec);
        let age = rec.completion_time - rec.generation_time;
        let accepted = self.accepted.is_empty() || age < self.current_aoi(rec.completion_time);
        if accepted {
            self.accepted.push(rec);
        } else {
            self.superseded.push(rec.task_id);
        }
        accepted
    }

    pub fn deliveries(&self) -> &[DeliveryRecord] {
        &self.deliveries
    }

    pub fn accepted(&self) -> &[DeliveryRecord] {
        &self.accepted
    }

    pub fn superseded(&self) -> &[u64] {
        &self.superseded
    }

    /// `AoI(t_i)` for every grid timestamp, counting deliveries at or before `t_i`.
    pub fn sample(&self, clock: &SimClock) -> Vec<f64> {
        let mut out = Vec::with_capacity(clock.step_count() + 1);
        let mut next = 0;
        let mut latest = 0.0;
        for t in clock.timestamps() {
            while next < self.accepted.len() && self.accepted[next].completion_time <= t {
                latest = self.accepted[next].generation_time;
                next += 1;
            }
            out.push(t - latest);
        }
        out
    }
}

/// Samples the AoI series from a completion-ordered delivery log.
pub fn sample_series(clock: &SimClock, deliveries: &[DeliveryRecord]) -> Vec<f64> {
    let mut timeline = AoiTimeline::new();
    for rec in deliveries {
        timeline.accept_delivery(*rec);
    }
    timeline.sample(clock)
}

pub fn average_aoi(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(SimError::Empty("average AoI"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

pub fn peak_aoi(samples: &[f64]) -> Result<f64> {
    samples
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(SimError::Empty("peak AoI"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoiSummary {
    pub average_aoi: f64,
    pub peak_aoi: f64,
    pub delivered_tasks: usize,
    pub superseded_tasks: usize,
    pub coverage_probability: f64,
}

impl AoiSummary {
    /// Summarizes the timeline over `clock`, skipping samples with `t_i < warmup_s`.
    pub fn compute(timeline: &AoiTimeline, clock: &SimClock, coverage_probability: f64, warmup_s: f64) -> Result<Self> {
        let samples: Vec<f64> = clock
            .timestamps()
            .zip(timeline.sample(clock))
            .filter(|(t, _)| *t >= warmup_s)
            .map(|(_, a)| a)
            .collect();
        Ok(Self {
            average_aoi: average_aoi(&samples)?,
            peak_aoi: peak_aoi(&samples)?,
            delivered_tasks: timeline.deliveries().len(),
            superseded_tasks: timeline.superseded().len(),
            coverage_probability,
        })
    }
}
