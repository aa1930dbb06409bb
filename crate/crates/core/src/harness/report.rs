use std::fmt::Write as _;

use super::{ExperimentData, ExperimentResult, ExperimentSpec};

/// Fixed-precision rendering used in every table, so output bytes depend
/// only on the values.
pub(crate) fn f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        format!("{x}")
    }
}

pub(crate) struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn markdown(&self) -> String {
        let mut out = format!("| {} |\n", self.header.join(" | "));
        out.push_str(&format!("|{}\n", "---|".repeat(self.header.len())));
        for r in &self.rows {
            out.push_str(&format!("| {} |\n", r.join(" | ")));
        }
        out
    }
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

pub(crate) fn render(spec: &ExperimentSpec, result: &ExperimentResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", spec.name);
    let _ = writeln!(s, "- kind: `{}`", spec.kind);
    let _ = writeln!(s, "- base seed: {}", spec.base_seed);
    let _ = writeln!(
        s,
        "- model: |V| = {}, profile {:?}",
        spec.model.vocab_size, spec.model.profile
    );
    let _ = writeln!(s, "- gamma: {}; delta: {}", list(&spec.gammas), list(&spec.deltas));
    let _ = writeln!(
        s,
        "- schemes: {}",
        spec.schemes.iter().map(|x| x.name()).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(
        s,
        "- sequences: {} watermarked, {} human, T = {} ± {}\n",
        spec.n_watermarked, spec.n_human, spec.tokens, spec.length_jitter
    );

    let passed = result.checks.iter().filter(|c| c.passed).count();
    let _ = writeln!(s, "## Checks ({passed}/{} passed)\n", result.checks.len());
    let mut t = Table::new(&["check", "result", "detail"]);
    for c in &result.checks {
        t.row(vec![
            c.name.clone(),
            if c.passed { "PASS" } else { "FAIL" }.to_string(),
            c.detail.clone(),
        ]);
    }
    s.push_str(&t.markdown());

    if let ExperimentData::TprFprGrid(grid) = &result.data {
        let refs: Vec<String> = grid
            .cells
            .iter()
            .filter_map(|c| {
                let gain = c.reference_gain?;
                let get = |name: &str| {
                    c.schemes
                        .iter()
                        .find(|g| g.scheme.name() == name)
                        .map(|g| g.tpr_at_fpr0)
                };
                let observed = match (get("bimarker"), get("kgw")) {
                    (Some(b), Some(k)) => format!("{:+.1} points", 100.0 * (b - k)),
                    _ => "n/a".to_string(),
                };
                Some(format!(
                    "- gamma {}, delta {}: reference real-model gain {:+.0} points; synthetic {}",
                    c.gamma,
                    c.delta,
                    100.0 * gain,
                    observed
                ))
            })
            .collect();
        if !refs.is_empty() {
            let _ = writeln!(s, "\n## TPR@FPR=0 gains (reference only)\n");
            for r in refs {
                let _ = writeln!(s, "{r}");
            }
        }
    }

    let _ = writeln!(s, "\n## Files\n");
    for name in result.files.keys() {
        let _ = writeln!(s, "- {name}");
    }
    s
}
