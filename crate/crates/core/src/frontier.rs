//! Exponent vectors, Pareto frontiers and their CSV/JSON export.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// How an exponent vector was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Provenance {
    /// Many messages: one per distinct source marginal plus one.
    Rectangle { w: usize },
    /// Zero-rate partition code; `b` and cells are 1-based.
    Partition { b: Vec<usize>, r: Vec<f64>, delta: f64 },
    /// Positive-rate code with one auxiliary channel per source-marginal group,
    /// each serialized row-major as `U|X` rows.
    Channels {
        rate: f64,
        u_size: usize,
        channels: Vec<Vec<f64>>,
    },
    /// Composite partition after local search from a tilt `r`.
    CompositePartition {
        b: Vec<usize>,
        r: Vec<f64>,
        weights: Vec<f64>,
        delta: f64,
    },
}

/// An achievable type-II exponent vector (nats), `+∞` allowed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentPoint {
    #[serde(serialize_with = "ser_extended")]
    pub theta: Vec<f64>,
    pub provenance: Provenance,
}

fn ser_extended<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else {
            seq.serialize_element("inf")?;
        }
    }
    seq.end()
}

impl ExponentPoint {
    /// `self ≥ other` componentwise.
    pub fn dominates(&self, other: &ExponentPoint) -> bool {
        self.theta.iter().zip(&other.theta).all(|(a, b)| a >= b)
    }
}

/// The Pareto-maximal achievable points; the region is their downward closure.
#[derive(Debug, Clone, Serialize)]
pub struct RegionFrontier {
    pub points: Vec<ExponentPoint>,
    /// Always true: the region is the downward closure of `points`.
    pub dominated_closure: bool,
    /// Free-form run facts (grid sizes, solver counters, caps).
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

/// Indices of the Pareto-maximal vectors, in input order; exact duplicates keep the first.
pub fn pareto_indices(thetas: &[Vec<f64>]) -> Vec<usize> {
    let dim = thetas.first().map_or(0, Vec::len);
    if dim == 2 {
        // sort by θ1 desc, θ2 desc, then sweep
        let mut order: Vec<usize> = (0..thetas.len()).collect();
        order.sort_by(|&a, &b| {
            thetas[b][0]
                .total_cmp(&thetas[a][0])
                .then(thetas[b][1].total_cmp(&thetas[a][1]))
                .then(a.cmp(&b))
        });
        let mut keep = Vec::new();
        let mut best2 = f64::NEG_INFINITY;
        for i in order {
            if thetas[i][1] > best2 {
                keep.push(i);
                best2 = thetas[i][1];
            }
        }
        keep.sort_unstable();
        return keep;
    }
    let mut keep: Vec<usize> = Vec::new();
    for (i, t) in thetas.iter().enumerate() {
        let dominated = thetas.iter().enumerate().any(|(j, s)| {
            j != i
                && s.iter().zip(t).all(|(a, b)| a >= b)
                && (s.iter().zip(t).any(|(a, b)| a > b) || j < i)
        });
        if !dominated {
            keep.push(i);
        }
    }
    keep
}

impl RegionFrontier {
    /// Pareto filter of `points`.
    pub fn from_points(points: Vec<ExponentPoint>) -> Self {
        let thetas: Vec<Vec<f64>> = points.iter().map(|p| p.theta.clone()).collect();
        let keep = pareto_indices(&thetas);
        let mut slots: Vec<Option<ExponentPoint>> = points.into_iter().map(Some).collect();
        let points = keep.into_iter().map(|i| slots[i].take().expect("unique")).collect();
        Self {
            points,
            dominated_closure: true,
            metadata: serde_json::Map::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Serialize) -> Self {
        self.metadata.insert(
            key.to_string(),
            serde_json::to_value(value).expect("metadata serializes"),
        );
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest achieved value of coordinate `k`.
    pub fn max_coordinate(&self, k: usize) -> f64 {
        self.points
            .iter()
            .map(|p| p.theta[k])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the downward closure of `points` contains `theta`.
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.points
            .iter()
            .any(|p| p.theta.iter().zip(theta).all(|(a, b)| a >= b))
    }

    /// Largest non-convexity witness: over pairs of finite points `(a, b)`,
    /// the margin by which their midpoint escapes every achieved point,
    /// `min_p max_k (mid_k − p_k)`. Positive means the region is not convex.
    pub fn nonconvexity(&self) -> Option<NonConvexity> {
        let finite: Vec<&ExponentPoint> = self
            .points
            .iter()
            .filter(|p| p.theta.iter().all(|v| v.is_finite()))
            .collect();
        let mut best: Option<NonConvexity> = None;
        for i in 0..finite.len() {
            for j in i + 1..finite.len() {
                let mid: Vec<f64> = finite[i]
                    .theta
                    .iter()
                    .zip(&finite[j].theta)
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                let margin = self
                    .points
                    .iter()
                    .map(|p| {
                        mid.iter()
                            .zip(&p.theta)
                            .map(|(m, v)| m - v)
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .fold(f64::INFINITY, f64::min);
                if best.as_ref().map_or(true, |b| margin > b.margin) {
                    best = Some(NonConvexity {
                        a: finite[i].theta.clone(),
                        b: finite[j].theta.clone(),
                        midpoint: mid,
                        margin,
                    });
                }
            }
        }
        best
    }

    /// One row per point: θ in nats, θ in bits, provenance fields, δ and units.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let k = self.points.first().map_or(0, |p| p.theta.len());
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=k).map(|i| format!("theta_{i}")).collect();
        header.extend((1..=k).map(|i| format!("theta_{i}_bits")));
        header.extend(["mode", "b", "r", "delta", "channels", "units"].map(String::from));
        w.write_record(&header)?;
        for p in &self.points {
            let mut row: Vec<String> = p.theta.iter().map(|v| sig12(*v)).collect();
            row.extend(p.theta.iter().map(|v| sig12(v / std::f64::consts::LN_2)));
            let (mode, b, r, delta, channels) = match &p.provenance {
                Provenance::Rectangle { .. } => ("rectangle", String::new(), String::new(), String::new(), String::new()),
                Provenance::Partition { b, r, delta } => {
                    ("partition", join_usize(b), join_f64(r), sig12(*delta), String::new())
                }
                Provenance::Channels { channels, .. } => (
                    "channels",
                    String::new(),
                    String::new(),
                    String::new(),
                    channels.iter().map(|c| join_f64(c)).collect::<Vec<_>>().join("|"),
                ),
                Provenance::CompositePartition { b, r, delta, .. } => {
                    ("composite_partition", join_usize(b), join_f64(r), sig12(*delta), String::new())
                }
            };
            row.extend([mode.to_string(), b, r, delta, channels, "nats".to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    /// Two-column `theta_1,theta_2` file sorted by `theta_1`, for plotting.
    pub fn write_plot_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut pts: Vec<&ExponentPoint> = self.points.iter().collect();
        pts.sort_by(|a, b| a.theta[0].total_cmp(&b.theta[0]));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["theta_1", "theta_2"])?;
        for p in pts {
            w.write_record([sig12(p.theta[0]), sig12(p.theta[1])])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonConvexity {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub midpoint: Vec<f64>,
    pub margin: f64,
}

/// Twelve significant digits, shortest form; `inf` for `+∞`.
pub fn sig12(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
        format!("{rounded}")
    }
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| sig12(*x)).collect::<Vec<_>>().join(";")
}
