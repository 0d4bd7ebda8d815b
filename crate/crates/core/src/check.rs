//! Uniform pass/fail records for the verification routines.

use serde::Serialize;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Label of the item that produced the largest deviation.
    pub worst: Option<String>,
    /// Per-item deviations, in the order they were recorded.
    pub items: Vec<(String, f64)>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        CheckReport {
            name: name.into(),
            max_deviation: 0.0,
            tolerance,
            passed: true,
            worst: None,
            items: Vec::new(),
        }
    }

    pub fn record(&mut self, label: impl Into<String>, deviation: f64) {
        let label = label.into();
        // NaN must fail loudly
        let dev = if deviation.is_nan() { f64::INFINITY } else { deviation };
        if dev > self.max_deviation || self.worst.is_none() {
            self.max_deviation = self.max_deviation.max(dev);
            self.worst = Some(label.clone());
        }
        self.passed = self.max_deviation <= self.tolerance;
        self.items.push((label, dev));
    }

    /// Folds another report's items into this one under a prefix.
    pub fn absorb(&mut self, prefix: &str, other: &CheckReport) {
        for (label, dev) in &other.items {
            self.record(format!("{prefix}{label}"), *dev);
        }
    }

    /// Items that exceed the tolerance.
    pub fn failures(&self) -> impl Iterator<Item = &(String, f64)> {
        self.items.iter().filter(|(_, d)| *d > self.tolerance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_worst_item() {
        let mut r = CheckReport::new("x", 1e-9);
        r.record("a", 1e-12);
        r.record("b", 1e-3);
        r.record("c", 1e-10);
        assert!(!r.passed);
        assert_eq!(r.worst.as_deref(), Some("b"));
        assert_eq!(r.failures().count(), 1);
        let mut ok = CheckReport::new("y", 1e-9);
        ok.record("a", f64::NAN);
        assert!(!ok.passed);
    }
}
