//! Run reports: the effective configuration followed by results as `#`
//! comment lines, so a report is itself a loadable config.

use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::Result;
use crate::metrics::MacsReport;
use crate::train::TrainOutcome;

#[derive(Clone, Debug)]
pub struct RunReport {
    pub command: String,
    pub config: RunConfig,
    pub phases: Vec<TrainOutcome>,
    /// Named scalar results, in insertion order.
    pub metrics: Vec<(String, f64)>,
    /// Named wall-clock timings in seconds.
    pub timings: Vec<(String, f64)>,
    pub macs: Option<MacsReport>,
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: &RunConfig) -> Self {
        RunReport {
            command: command.into(),
            config: config.clone(),
            phases: Vec::new(),
            metrics: Vec::new(),
            timings: Vec::new(),
            macs: None,
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    pub fn timing(&mut self, name: impl Into<String>, seconds: f64) {
        self.timings.push((name.into(), seconds));
    }

    /// Render; `with_timings = false` gives a byte-stable report.
    pub fn render(&self, with_timings: bool) -> String {
        let mut s = format!("# run report: {}\n", self.command);
        s.push_str(&format!("# seed {} (data streams derive from it)\n", self.config.seed));
        s.push_str(&self.config.render());
        for p in &self.phases {
            let last = p.losses.last().copied().unwrap_or(f64::NAN);
            s.push_str(&format!(
                "# phase {}: steps {} sigma {:.2} alpha {:.2} final_loss {:.8} val_psnr {:.4} -> {:.4}\n",
                p.phase,
                p.steps,
                p.sigma.as_8bit(),
                p.alpha,
                last,
                p.initial_val_psnr,
                p.final_val_psnr
            ));
        }
        for (k, v) in &self.metrics {
            s.push_str(&format!("# metric {k} = {v:.6}\n"));
        }
        if let Some(m) = &self.macs {
            for r in &m.rows {
                s.push_str(&format!(
                    "# macs {} = {} ({:.4}%, {} params)\n",
                    r.component, r.macs, r.overhead_pct, r.params
                ));
            }
        }
        if with_timings {
            for (k, v) in &self.timings {
                s.push_str(&format!("# seconds {k} = {v:.3}\n"));
            }
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.render(true))?;
        Ok(())
    }
}
