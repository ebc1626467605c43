//! Step-by-step inference for many independent observation streams.
//!
//! Each stream keeps the encodings, keys and values of its most recent
//! observations, so a step only encodes the new observation. Results match a
//! full [`Net::forward`] over the same window up to float rounding.

use std::collections::VecDeque;

use ndarray::{Array2, Axis};

use super::dist::ActionDistribution;
use super::net::{softmax_in_place, Net};
use super::params::PolicyParams;
use super::spec::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub dist: ActionDistribution,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
struct Stream {
    h: VecDeque<Vec<f32>>,
    k: VecDeque<Vec<f32>>,
    v: VecDeque<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct PolicyRunner {
    net: Net<f32>,
    streams: Vec<Stream>,
}

impl PolicyRunner {
    pub fn new(params: &PolicyParams, streams: usize) -> Self {
        PolicyRunner { net: Net::from_params(params), streams: vec![Stream::default(); streams] }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.net.spec
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    /// Forgets a stream's history (new episode or leaf reactivation).
    pub fn reset(&mut self, stream: usize) {
        self.streams[stream] = Stream::default();
    }

    pub fn reset_all(&mut self) {
        self.streams.iter_mut().for_each(|s| *s = Stream::default());
    }

    /// Number of past observations (including the newest) a stream holds.
    pub fn history(&self, stream: usize) -> usize {
        self.streams[stream].h.len()
    }

    /// Feeds one new observation to each listed stream and returns the
    /// resulting distributions, in request order. Streams must be distinct.
    pub fn step(&mut self, requests: &[(usize, &[f32])]) -> Vec<PolicyOutput> {
        if requests.is_empty() {
            return vec![];
        }
        let spec = self.net.spec.clone();
        let mut x = Array2::<f32>::zeros((requests.len(), spec.input));
        for (i, (_, obs)) in requests.iter().enumerate() {
            assert_eq!(obs.len(), spec.input, "observation width");
            x.row_mut(i).assign(&ndarray::ArrayView1::from(*obs));
        }
        let acts = self.net.encode(x.view());
        let h = acts.last().expect("depth >= 1");
        let feat = match (&self.net.attn, spec.attention) {
            (Some([wq, wk, wv]), Some(a)) => {
                let q = wq.forward(h.view());
                let k = wk.forward(h.view());
                let v = wv.forward(h.view());
                let scale = 1.0 / (a.dim as f32).sqrt();
                let mut feat = Array2::<f32>::zeros((requests.len(), spec.width + a.dim));
                let mut scores = Vec::with_capacity(a.max_seq);
                for (i, &(sid, _)) in requests.iter().enumerate() {
                    let s = &mut self.streams[sid];
                    if s.h.len() == a.max_seq {
                        s.h.pop_front();
                        s.k.pop_front();
                        s.v.pop_front();
                    }
                    s.h.push_back(h.row(i).to_vec());
                    s.k.push_back(k.row(i).to_vec());
                    s.v.push_back(v.row(i).to_vec());
                    let qi = q.row(i);
                    let qs = qi.as_slice().expect("contiguous");
                    scores.clear();
                    scores.extend(s.k.iter().map(|kj| dot(qs, kj) * scale));
                    softmax_in_place(&mut scores);
                    let mut row = feat.row_mut(i);
                    let row = row.as_slice_mut().expect("contiguous");
                    row[..spec.width].copy_from_slice(h.row(i).as_slice().expect("contiguous"));
                    let ctx = &mut row[spec.width..];
                    for (alpha, vj) in scores.iter().zip(&s.v) {
                        for (c, &vv) in ctx.iter_mut().zip(vj) {
                            *c += alpha * vv;
                        }
                    }
                }
                feat
            }
            _ => {
                for &(sid, _) in requests {
                    let s = &mut self.streams[sid];
                    s.h.clear();
                    s.h.push_back(Vec::new());
                }
                h.clone()
            }
        };
        let out = self.net.heads(feat.view());
        let log_std = [out.log_std[0] as f64, out.log_std[1] as f64];
        (0..requests.len())
            .map(|i| PolicyOutput {
                dist: ActionDistribution {
                    mean: [out.mean[[i, 0]] as f64, out.mean[[i, 1]] as f64],
                    log_std,
                    shoot_logit: out.shoot_logit.as_ref().map(|s| s[i] as f64),
                },
                value: out.value[i] as f64,
            })
            .collect()
    }

    /// Single-stream convenience wrapper.
    pub fn step_one(&mut self, stream: usize, obs: &[f32]) -> PolicyOutput {
        self.step(&[(stream, obs)])[0]
    }

    /// Value estimate for `obs` given the stream's history, without
    /// recording the observation.
    pub fn peek_value(&self, stream: usize, obs: &[f32]) -> f64 {
        let mut probe = PolicyRunner { net: self.net.clone(), streams: vec![self.streams[stream].clone()] };
        probe.step_one(0, obs).value
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Splits a matrix of stacked observation rows for use with [`Net::forward`].
pub fn rows_to_array(rows: &[&[f32]], width: usize) -> Array2<f32> {
    let mut x = Array2::<f32>::zeros((rows.len(), width));
    for (mut dst, src) in x.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(*src));
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btree::TaskKind;

    fn obs(t: usize, width: usize) -> Vec<f32> {
        (0..width).map(|i| (((t * 31 + i * 7) % 23) as f32 / 23.0) - 0.4).collect()
    }

    #[test]
    fn incremental_matches_full_window() {
        let spec = NetworkSpec::curriculum();
        let p = PolicyParams::init(&spec, 11);
        let mut runner = PolicyRunner::new(&p, 2);
        let net = Net::<f32>::from_params(&p);
        let seq: Vec<Vec<f32>> = (0..26).map(|t| obs(t, spec.input)).collect();
        for t in 0..seq.len() {
            let got = runner.step_one(1, &seq[t]);
            let first = (t + 1).saturating_sub(20);
            let rows: Vec<&[f32]> = seq[first..=t].iter().map(|r| r.as_slice()).collect();
            let c = net.forward(rows_to_array(&rows, spec.input), &[(0, rows.len() - 1)]);
            assert!((got.dist.mean[0] - c.out.mean[[0, 0]] as f64).abs() < 1e-5);
            assert!((got.dist.mean[1] - c.out.mean[[0, 1]] as f64).abs() < 1e-5);
            assert!((got.value - c.out.value[0] as f64).abs() < 1e-5);
            assert_eq!(runner.history(1), t.min(19) + 1);
        }
        assert_eq!(runner.history(0), 0);
    }

    #[test]
    fn reset_forgets_history() {
        let spec = NetworkSpec::for_task(TaskKind::Search);
        let p = PolicyParams::init(&spec, 2);
        let mut a = PolicyRunner::new(&p, 1);
        let mut b = PolicyRunner::new(&p, 1);
        a.step_one(0, &obs(5, spec.input));
        a.reset(0);
        let x = obs(9, spec.input);
        assert_eq!(a.step_one(0, &x), b.step_one(0, &x));
    }

    #[test]
    fn mlp_policy_has_no_memory() {
        let spec = NetworkSpec::for_task(TaskKind::Combat);
        let p = PolicyParams::init(&spec, 2);
        let mut a = PolicyRunner::new(&p, 1);
        let mut b = PolicyRunner::new(&p, 1);
        a.step_one(0, &obs(1, spec.input));
        let x = obs(4, spec.input);
        assert_eq!(a.step_one(0, &x), b.step_one(0, &x));
        assert!(a.step_one(0, &x).dist.shoot_logit.is_some());
    }
}
