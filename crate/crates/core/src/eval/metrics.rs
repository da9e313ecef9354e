use serde::{Deserialize, Serialize};

use super::EpisodeReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub sr: f64,
    pub isr: f64,
    pub csr: f64,
    pub cgt: f64,
    /// Executed actions per second of policy time.
    pub aps: f64,
    pub episodes: usize,
}

/// SR, ISR, CSR, CGT and APS over a set of episodes.
///
/// ISR and CSR are averaged per episode, so `SR <= CSR <= ISR` holds for any
/// mix of episode lengths. CSR counts subtasks whose whole prefix succeeded;
/// CGT additionally weights each prefix by
/// `expert_len / max(expert_len, agent_len)`.
pub fn metrics(reports: &[EpisodeReport]) -> Result<MetricSummary> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("episode reports".into()));
    }
    let mut sr = 0.0;
    let mut csr = 0.0;
    let mut cgt = 0.0;
    let mut isr = 0.0;
    for r in reports {
        let m = r.subtasks.len();
        if m == 0 {
            return Err(Error::EmptyInput(format!("subtasks of episode {}", r.task_id)));
        }
        let mut prefix = true;
        let (mut c, mut g, mut ok) = (0.0, 0.0, 0.0);
        for s in &r.subtasks {
            prefix &= s.success;
            if s.success {
                ok += 1.0;
            }
            if prefix {
                c += 1.0;
                let l = s.expert_len.max(1) as f64;
                g += l / l.max(s.agent_len as f64);
            }
        }
        isr += ok / m as f64;
        sr += f64::from(u8::from(r.success()));
        csr += c / m as f64;
        cgt += g / m as f64;
    }
    let n = reports.len() as f64;
    let acts: usize = reports.iter().map(|r| r.n_act).sum();
    let t: f64 = reports.iter().map(|r| r.t_nav).sum();
    Ok(MetricSummary {
        sr: sr / n,
        isr: isr / n,
        csr: csr / n,
        cgt: cgt / n,
        aps: if acts == 0 || t <= 0.0 { 0.0 } else { acts as f64 / t },
        episodes: reports.len(),
    })
}
