//! Estimated counts at every candidate energy, with their error radii.

use serde::{Deserialize, Serialize};

use crate::gibbs::GibbsInstance;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiRecord {
    pub x: f64,
    pub pi_hat: f64,
    pub u: f64,
}

/// Estimates of `mu_{beta_min}(x)` with radii, plus the parameters they were made for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiTable {
    pub records: Vec<PiRecord>,
    pub delta: f64,
    pub eps: f64,
    pub gamma: f64,
    pub profile: String,
    pub cost: u64,
}

impl PiTable {
    pub fn get(&self, x: f64) -> Option<&PiRecord> {
        self.records.iter().find(|r| r.x == x)
    }

    /// Whether every record meets the count-estimation contract against the exact instance.
    pub fn satisfies(&self, inst: &GibbsInstance, eps: f64, delta: f64) -> bool {
        self.violations(inst, eps, delta).is_empty()
    }

    /// Energies whose record breaks the contract.
    pub fn violations(&self, inst: &GibbsInstance, eps: f64, delta: f64) -> Vec<f64> {
        let pi = inst.pi();
        let mut bad = Vec::new();
        for r in &self.records {
            let j = inst.support().iter().position(|&s| s == r.x);
            let p = j.map_or(0.0, |j| pi[j]);
            let zero = j.is_none_or(|j| inst.log_counts()[j] == f64::NEG_INFINITY);
            let ok = if zero {
                r.pi_hat == 0.0
            } else {
                let big_delta = inst.delta_max(r.x).unwrap();
                (r.pi_hat - p).abs() <= r.u && r.u <= eps * p * (1.0 + delta / big_delta)
            };
            if !ok {
                bad.push(r.x);
            }
        }
        bad
    }

    /// CSV text with header `x,pi_hat,u`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,pi_hat,u\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{}\n", r.x, r.pi_hat, r.u));
        }
        s
    }
}
