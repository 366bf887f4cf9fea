//! Plain-text snapshot files: `# key=value` header lines followed by one
//! particle per line with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::geometry::{Domain, DomainKind, Point};
use super::params::ModelParams;
use super::particles::{pair_violations, ParticleConfiguration};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub d: usize,
    pub gamma: f64,
    pub hc_radius: f64,
    pub beta: f64,
    pub lambda: f64,
    pub side: f64,
    pub kind: DomainKind,
    pub seed: u64,
    pub step: u64,
    pub positions: Vec<Point>,
}

/// Decimal rendering with 17 significant digits (round-trips every `f64`).
pub fn format_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.16}", x);
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (16 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    // log10 can land one off near powers of ten
    let digits = s.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
    let significant = digits.trim_start_matches('0').len();
    if significant > 17 && decimals > 0 {
        format!("{:.*}", decimals - 1, x)
    } else {
        s
    }
}

impl Snapshot {
    pub fn from_configuration(q: &ParticleConfiguration, params: &ModelParams, seed: u64, step: u64) -> Self {
        Snapshot {
            d: params.d,
            gamma: params.gamma,
            hc_radius: params.hc_radius,
            beta: params.beta,
            lambda: params.lambda,
            side: q.domain().side,
            kind: q.domain().kind,
            seed,
            step,
            positions: q.positions().to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kind = match self.kind {
            DomainKind::Box => "box",
            DomainKind::Torus => "torus",
        };
        let _ = writeln!(s, "# dimension={}", self.d);
        let _ = writeln!(s, "# gamma={}", format_sig17(self.gamma));
        let _ = writeln!(s, "# R={}", format_sig17(self.hc_radius));
        let _ = writeln!(s, "# beta={}", format_sig17(self.beta));
        let _ = writeln!(s, "# lambda={}", format_sig17(self.lambda));
        let _ = writeln!(s, "# side={}", format_sig17(self.side));
        let _ = writeln!(s, "# kind={kind}");
        let _ = writeln!(s, "# seed={}", self.seed);
        let _ = writeln!(s, "# step={}", self.step);
        for p in &self.positions {
            let cols: Vec<String> = p[..self.d].iter().map(|&x| format_sig17(x)).collect();
            let _ = writeln!(s, "{}", cols.join(" "));
        }
        s
    }

    /// Parses a snapshot and validates hard-core admissibility.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header = BTreeMap::new();
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('#') {
                let (k, v) = rest.trim().split_once('=').ok_or(Error::Parse {
                    line: line_no,
                    msg: "header line must be `# key=value`".into(),
                })?;
                header.insert(k.trim().to_string(), (line_no, v.trim().to_string()));
            } else {
                let vals: std::result::Result<Vec<f64>, _> = t.split_whitespace().map(str::parse).collect();
                let vals = vals.map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad coordinate: {e}"),
                })?;
                rows.push((line_no, vals));
            }
        }
        let get = |k: &str| -> Result<&(usize, String)> {
            header.get(k).ok_or(Error::Parse {
                line: 0,
                msg: format!("missing header key `{k}`"),
            })
        };
        let num = |k: &str| -> Result<f64> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                msg: format!("`{k}` is not a number"),
            })
        };
        let d = num("dimension")? as usize;
        let kind = match get("kind")?.1.as_str() {
            "box" => DomainKind::Box,
            "torus" => DomainKind::Torus,
            other => {
                return Err(Error::Parse {
                    line: get("kind")?.0,
                    msg: format!("unknown domain kind `{other}`"),
                })
            }
        };
        let mut positions = Vec::with_capacity(rows.len());
        for (line, vals) in rows {
            if vals.len() != d {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {d} coordinates, found {}", vals.len()),
                });
            }
            let mut p = [0.0; 3];
            p[..d].copy_from_slice(&vals);
            positions.push(p);
        }
        let snap = Snapshot {
            d,
            gamma: num("gamma")?,
            hc_radius: num("R")?,
            beta: num("beta")?,
            lambda: num("lambda")?,
            side: num("side")?,
            kind,
            seed: num("seed")? as u64,
            step: header.get("step").and_then(|(_, v)| v.parse().ok()).unwrap_or(0),
            positions,
        };
        let metric = super::geometry::Metric {
            d,
            period: (kind == DomainKind::Torus).then_some(snap.side),
        };
        if let Some(&(i, j)) = pair_violations(&snap.positions, snap.hc_radius, metric).first() {
            return Err(Error::HardCoreOverlap(i, j));
        }
        Ok(snap)
    }

    /// Rebuilds a configuration; `params` supplies the scale exponents.
    pub fn to_configuration(&self, params: &ModelParams) -> Result<ParticleConfiguration> {
        let domain = Domain::from_side(self.kind, params, self.side, Vec::new())?;
        ParticleConfiguration::new(self.positions.clone(), domain, params)
    }

    /// SHA-256 of the text rendering, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sig17_roundtrips(x in -1e6f64..1e6) {
            let s = format_sig17(x);
            prop_assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn parse_rejects_overlaps_and_roundtrips() {
        let snap = Snapshot {
            d: 2,
            gamma: 0.1,
            hc_radius: 0.5,
            beta: 2.0,
            lambda: 0.1,
            side: 40.0,
            kind: DomainKind::Torus,
            seed: 7,
            step: 3,
            positions: vec![[1.0 / 3.0, 2.0, 0.0], [5.0, 6.0, 0.0]],
        };
        let back = Snapshot::parse(&snap.to_text()).unwrap();
        assert_eq!(back, snap);
        let bad = snap.to_text() + "0.5 2.2\n";
        assert!(matches!(Snapshot::parse(&bad), Err(Error::HardCoreOverlap(..))));
    }
}
