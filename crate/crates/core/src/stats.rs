//! Evaluation statistics: paired signed-rank tests, usability scores,
//! latency summaries and medians.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest sample the exact null distribution is computed for.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub unit_id: String,
    #[serde(rename = "score_nas")]
    pub score_a: f64,
    #[serde(rename = "score_kpd")]
    pub score_b: f64,
}

impl PairedSample {
    pub fn new(unit_id: impl Into<String>, score_a: f64, score_b: f64) -> Self {
        Self { unit_id: unit_id.into(), score_a, score_b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NormalApprox,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub n_effective: usize,
    /// The smaller of the two signed-rank sums.
    pub w_statistic: f64,
    /// Rank sum of positive differences (score_a - score_b > 0).
    pub t_plus: f64,
    pub t_minus: f64,
    pub z: f64,
    pub p_two_sided: f64,
    pub effect_r: f64,
    pub method: Method,
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("every paired difference is zero; the test is undefined")]
    AllZero,
    #[error("non-finite score for unit {0}")]
    NonFinite(String),
    #[error("exact method supports at most {EXACT_MAX_N} nonzero pairs, got {0}")]
    TooLargeForExact(usize),
    #[error("no values")]
    Empty,
    #[error("SUS item {item} is {value}; items must be integers 1..5")]
    InvalidSusItem { item: usize, value: f64 },
    #[error("a SUS response has exactly 10 items, got {0}")]
    SusLength(usize),
    #[error("CSV: {0}")]
    Csv(String),
}

impl From<csv::Error> for StatsError {
    fn from(e: csv::Error) -> Self {
        Self::Csv(e.to_string())
    }
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided exact p-value of the observed positive rank sum under the
/// sign-flip null. Ranks may be half-integers.
pub fn exact_p(ranks: &[f64], t_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let t = (t_plus * 2.0).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let lower: u64 = counts[..=t.min(total)].iter().sum();
    let upper: u64 = counts[t.min(total)..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}

pub fn wilcoxon_signed_rank(pairs: &[PairedSample], method: Method) -> Result<WilcoxonResult, StatsError> {
    let mut diffs = Vec::new();
    for p in pairs {
        if !p.score_a.is_finite() || !p.score_b.is_finite() {
            return Err(StatsError::NonFinite(p.unit_id.clone()));
        }
        let d = p.score_a - p.score_b;
        if d != 0.0 {
            diffs.push(d);
        }
    }
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::AllZero);
    }
    if method == Method::Exact && n > EXACT_MAX_N {
        return Err(StatsError::TooLargeForExact(n));
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let t_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let t_minus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d < 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
    let z = (t_plus - mean) / sd;
    let p_two_sided = match method {
        Method::NormalApprox => {
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * normal.cdf(-z.abs())).min(1.0)
        }
        Method::Exact => exact_p(&ranks, t_plus),
    };
    Ok(WilcoxonResult {
        n_effective: n,
        w_statistic: t_plus.min(t_minus),
        t_plus,
        t_minus,
        z,
        p_two_sided,
        effect_r: z / nf.sqrt(),
        method,
    })
}

/// Standard SUS scoring: odd items contribute score - 1, even items
/// 5 - score, and the sum is scaled by 2.5.
pub fn sus_score(items: &[f64]) -> Result<f64, StatsError> {
    if items.len() != 10 {
        return Err(StatsError::SusLength(items.len()));
    }
    let mut total = 0.0;
    for (i, &v) in items.iter().enumerate() {
        if v.fract() != 0.0 || !(1.0..=5.0).contains(&v) {
            return Err(StatsError::InvalidSusItem { item: i + 1, value: v });
        }
        total += if i % 2 == 0 { v - 1.0 } else { 5.0 - v };
    }
    Ok(total * 2.5)
}

pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 0 { (v[mid - 1] + v[mid]) / 2.0 } else { v[mid] })
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub system: String,
    pub company: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub per_company: BTreeMap<String, f64>,
    /// Mean over companies, rounded to two decimals.
    pub mean: f64,
}

/// Per-system mean over companies. Repeated records for one company are
/// averaged first.
pub fn latency_summary(records: &[LatencyRecord]) -> Result<BTreeMap<String, LatencySummary>, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut grouped: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in records {
        if !r.seconds.is_finite() || r.seconds < 0.0 {
            return Err(StatsError::NonFinite(format!("{}/{}", r.system, r.company)));
        }
        grouped.entry(&r.system).or_default().entry(&r.company).or_default().push(r.seconds);
    }
    Ok(grouped
        .into_iter()
        .map(|(system, companies)| {
            let per_company: BTreeMap<String, f64> = companies
                .into_iter()
                .map(|(c, xs)| (c.to_string(), xs.iter().sum::<f64>() / xs.len() as f64))
                .collect();
            let mean = per_company.values().sum::<f64>() / per_company.len() as f64;
            (system.to_string(), LatencySummary { per_company, mean: round2(mean) })
        })
        .collect())
}

pub fn read_pairs(reader: impl Read) -> Result<Vec<PairedSample>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(StatsError::from)).collect()
}

pub fn read_latency(reader: impl Read) -> Result<Vec<LatencyRecord>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(StatsError::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SusRow {
    pub unit_id: String,
    pub system: String,
    pub score: f64,
}

/// SUS responses: `unit_id,system,q1..q10`.
pub fn read_sus(reader: impl Read) -> Result<Vec<SusRow>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 12 {
            return Err(StatsError::Csv(format!("record {} has {} fields, expected 12", line + 1, rec.len())));
        }
        let items = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|e| StatsError::Csv(format!("record {}: {e}", line + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(SusRow {
            unit_id: rec[0].to_string(),
            system: rec[1].to_string(),
            score: sus_score(&items)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(diffs: &[f64]) -> Vec<PairedSample> {
        diffs.iter().enumerate().map(|(i, d)| PairedSample::new(i.to_string(), *d, 0.0)).collect()
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn zeros_are_dropped() {
        let r = wilcoxon_signed_rank(&pairs(&[0.0, 1.0, -2.0, 0.0, 3.0]), Method::NormalApprox).unwrap();
        assert_eq!(r.n_effective, 3);
        assert_eq!((r.t_plus, r.t_minus, r.w_statistic), (4.0, 2.0, 2.0));
        assert_eq!(wilcoxon_signed_rank(&pairs(&[0.0]), Method::Exact), Err(StatsError::AllZero));
    }

    #[test]
    fn single_pair_exact_is_one() {
        let r = wilcoxon_signed_rank(&pairs(&[1.0]), Method::Exact).unwrap();
        assert_eq!((r.n_effective, r.w_statistic, r.p_two_sided), (1, 0.0, 1.0));
    }

    #[test]
    fn exact_rejects_large_samples() {
        let d: Vec<f64> = (1..=26).map(f64::from).collect();
        assert_eq!(wilcoxon_signed_rank(&pairs(&d), Method::Exact), Err(StatsError::TooLargeForExact(26)));
    }

    #[test]
    fn sus_bounds() {
        assert_eq!(sus_score(&[3.0; 10]).unwrap(), 50.0);
        let best: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 5.0 } else { 1.0 }).collect();
        let worst: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { 5.0 }).collect();
        assert_eq!(sus_score(&best).unwrap(), 100.0);
        assert_eq!(sus_score(&worst).unwrap(), 0.0);
        assert_eq!(sus_score(&[6.0; 10]), Err(StatsError::InvalidSusItem { item: 1, value: 6.0 }));
        assert_eq!(sus_score(&[3.0; 9]), Err(StatsError::SusLength(9)));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 4.0, 4.0, 5.0]).unwrap(), 4.0);
        assert_eq!(median(&[52.5]).unwrap(), 52.5);
        assert_eq!(median(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn latency_single_record() {
        let s = latency_summary(&[LatencyRecord { system: "x".into(), company: "A".into(), seconds: 4.2 }]).unwrap();
        assert_eq!(s["x"].mean, 4.2);
    }

    #[test]
    fn csv_readers() {
        let p = read_pairs("unit_id,score_nas,score_kpd\nr1, 3, 4\nr2,5,5\n".as_bytes()).unwrap();
        assert_eq!(p[0], PairedSample::new("r1", 3.0, 4.0));
        let s = read_sus("unit_id,system,q1,q2,q3,q4,q5,q6,q7,q8,q9,q10\nr1,nas,3,3,3,3,3,3,3,3,3,3\n".as_bytes()).unwrap();
        assert_eq!(s[0].score, 50.0);
        assert!(read_pairs("unit_id,score_nas,score_kpd\nr1,x,4\n".as_bytes()).is_err());
    }
}
