/// Scans excluded from the statistics while caches and the map warm up.
pub const WARMUP_SCANS: usize = 5;

/// Mean and population standard deviation of a phase, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl PhaseStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            count: samples.len(),
        }
    }

    pub fn is_populated(&self) -> bool {
        self.count > 0
    }
}

/// Wall-clock seconds spent on one scan.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScanTiming {
    pub total: f64,
    pub optimize: f64,
    /// Map update time; `None` when the scan was not a keyframe.
    pub update: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TimingRecorder {
    scans: Vec<ScanTiming>,
}

impl TimingRecorder {
    pub fn record(&mut self, t: ScanTiming) {
        self.scans.push(t);
    }

    pub fn scans(&self) -> &[ScanTiming] {
        &self.scans
    }

    pub fn report(&self) -> TimingReport {
        let kept = self.scans.get(WARMUP_SCANS..).unwrap_or(&[]);
        let total: Vec<f64> = kept.iter().map(|s| s.total).collect();
        let optimize: Vec<f64> = kept.iter().map(|s| s.optimize).collect();
        let update: Vec<f64> = kept.iter().filter_map(|s| s.update).collect();
        TimingReport {
            total: PhaseStats::from_samples(&total),
            optimize: PhaseStats::from_samples(&optimize),
            update: PhaseStats::from_samples(&update),
            scans: self.scans.len(),
            warmup: WARMUP_SCANS.min(self.scans.len()),
        }
    }
}

/// Per-phase statistics over all scans after the warm-up. `update` covers
/// keyframe scans only.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingReport {
    pub total: PhaseStats,
    pub optimize: PhaseStats,
    pub update: PhaseStats,
    pub scans: usize,
    pub warmup: usize,
}

impl TimingReport {
    pub fn to_json(&self) -> String {
        let phase = |p: &PhaseStats| {
            format!(
                "{{\"mean_s\": {}, \"std_s\": {}, \"count\": {}}}",
                p.mean, p.std, p.count
            )
        };
        format!(
            "{{\"scans\": {}, \"warmup_excluded\": {}, \"total\": {}, \"optimize\": {}, \"update\": {}}}\n",
            self.scans,
            self.warmup,
            phase(&self.total),
            phase(&self.optimize),
            phase(&self.update)
        )
    }

    pub fn to_table(&self) -> String {
        let row = |name: &str, p: &PhaseStats| {
            format!(
                "{name:<10}{:>10.4} ± {:<10.4}{:>6}\n",
                p.mean, p.std, p.count
            )
        };
        let mut s = format!(
            "{:<10}{:>10}   {:<10}{:>6}\n",
            "phase", "mean [s]", "std [s]", "n"
        );
        s += &row("total", &self.total);
        s += &row("optimize", &self.optimize);
        s += &row("update", &self.update);
        s
    }
}
