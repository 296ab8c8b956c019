use super::{flatten_cohort, AutoencoderModel};
use crate::error::{Error, Result};
use crate::synth::Cohort;
use nalgebra::DMatrix;

/// Encoder outputs for a cohort, one row per subject, with the constants
/// that standardise each component to mean 0 and SD 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub ids: Vec<usize>,
    pub raw: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

fn mean_sd(col: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = col.clone().count() as f64;
    let m = col.clone().sum::<f64>() / n;
    let var = col.map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

impl Embedding {
    pub fn from_raw(ids: Vec<usize>, raw: DMatrix<f64>) -> Result<Self> {
        if ids.len() != raw.nrows() {
            return Err(Error::Dimension {
                expected: raw.nrows(),
                got: ids.len(),
            });
        }
        if raw.nrows() < 2 {
            return Err(Error::Data(
                "standardising an embedding needs at least 2 subjects".into(),
            ));
        }
        let (mut mean, mut sd) = (Vec::new(), Vec::new());
        for c in raw.column_iter() {
            let (m, s) = mean_sd(c.iter().copied());
            mean.push(m);
            // a constant component stays centred but unscaled
            sd.push(if s > 0.0 { s } else { 1.0 });
        }
        Ok(Embedding { ids, raw, mean, sd })
    }

    pub fn len(&self) -> usize {
        self.raw.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.raw.ncols()
    }

    pub fn standardized(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim(), |i, k| {
            (self.raw[(i, k)] - self.mean[k]) / self.sd[k]
        })
    }

    /// Reorders and sign-flips components; standardisation constants are
    /// transformed to match.
    pub fn aligned(&self, a: &Alignment) -> Embedding {
        let raw = DMatrix::from_fn(self.len(), a.order.len(), |i, k| {
            let j = a.order[k];
            a.signs[j] * self.raw[(i, j)]
        });
        Embedding {
            ids: self.ids.clone(),
            raw,
            mean: a.order.iter().map(|&j| a.signs[j] * self.mean[j]).collect(),
            sd: a.order.iter().map(|&j| self.sd[j]).collect(),
        }
    }

    pub fn header(d: usize) -> Vec<String> {
        let mut h = vec!["id".to_string()];
        h.extend((1..=d).map(|k| format!("P{k}_raw")));
        h.extend((1..=d).map(|k| format!("P{k}_std")));
        h
    }

    /// `id, P1_raw … Pd_raw, P1_std … Pd_std`.
    pub fn to_csv(&self) -> String {
        let std = self.standardized();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::header(self.dim())).expect("in-memory write");
        for i in 0..self.len() {
            let mut row = vec![self.ids[i].to_string()];
            row.extend(self.raw.row(i).iter().map(|v| v.to_string()));
            row.extend(std.row(i).iter().map(|v| v.to_string()));
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// Reads the raw columns back and recomputes the constants.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r
            .headers()
            .map_err(|e| Error::Data(format!("embedding csv: {e}")))?
            .clone();
        if headers.len() < 3 || (headers.len() - 1) % 2 != 0 {
            return Err(Error::Data("embedding csv: unexpected header".into()));
        }
        let d = (headers.len() - 1) / 2;
        if headers.iter().ne(Self::header(d).iter().map(String::as_str)) {
            return Err(Error::Data("embedding csv: unexpected header".into()));
        }
        let mut ids = Vec::new();
        let mut vals = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Data(format!("embedding csv: {e}")))?;
            ids.push(
                rec[0]
                    .parse()
                    .map_err(|_| Error::Data(format!("embedding csv: bad id `{}`", &rec[0])))?,
            );
            for k in 1..=d {
                vals.push(
                    rec[k]
                        .parse::<f64>()
                        .map_err(|_| Error::Data(format!("embedding csv: bad value `{}`", &rec[k])))?,
                );
            }
        }
        let raw = DMatrix::from_row_slice(ids.len(), d, &vals);
        Embedding::from_raw(ids, raw)
    }
}

/// Encodes every mesh of a cohort.
pub fn encode_cohort(model: &AutoencoderModel, cohort: &Cohort) -> Result<Embedding> {
    let data = flatten_cohort(cohort)?;
    let raw = model.encode_batch(&data)?;
    Embedding::from_raw(cohort.subjects.iter().map(|s| s.id).collect(), raw)
}

/// Assignment of embedding components to reference measures.
///
/// Aligned component `k` is `signs[order[k]] · raw[order[k]]` and is matched
/// to measure `measure[k]`; `measure` is increasing, so the component matched
/// to the first measure comes first. `signs` is indexed by raw component.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub order: Vec<usize>,
    pub signs: Vec<f64>,
    pub measure: Vec<usize>,
    /// Correlation of each aligned component with its measure (≥ 0).
    pub corr: Vec<f64>,
}

/// Pearson correlation; 0 when either series is constant.
pub fn correlation(a: impl Iterator<Item = f64> + Clone, b: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = a.clone().count() as f64;
    let ma = a.clone().sum::<f64>() / n;
    let mb = b.clone().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Greedy one-to-one matching of components (columns of `embedding`) to
/// measures (columns of `measures`) by largest |correlation|, ties going to
/// the lower component index, with signs chosen to make each matched
/// correlation positive.
pub fn align_components(embedding: &DMatrix<f64>, measures: &DMatrix<f64>) -> Result<Alignment> {
    let (d, m) = (embedding.ncols(), measures.ncols());
    if embedding.nrows() != measures.nrows() {
        return Err(Error::Dimension {
            expected: embedding.nrows(),
            got: measures.nrows(),
        });
    }
    if m < d {
        return Err(Error::Data(format!("{m} measures cannot label {d} components")));
    }
    let mut c = DMatrix::zeros(d, m);
    for j in 0..d {
        for k in 0..m {
            c[(j, k)] = correlation(embedding.column(j).iter().copied(), measures.column(k).iter().copied());
        }
    }
    let mut comp_used = vec![false; d];
    let mut meas_used = vec![false; m];
    let mut pairs = Vec::with_capacity(d);
    for _ in 0..d {
        let mut best: Option<(usize, usize)> = None;
        for j in (0..d).filter(|&j| !comp_used[j]) {
            for k in (0..m).filter(|&k| !meas_used[k]) {
                let better = match best {
                    None => true,
                    Some((bj, bk)) => c[(j, k)].abs() > c[(bj, bk)].abs(),
                };
                if better {
                    best = Some((j, k));
                }
            }
        }
        let (j, k) = best.expect("an unused pair exists");
        comp_used[j] = true;
        meas_used[k] = true;
        pairs.push((k, j));
    }
    pairs.sort_unstable();
    let mut signs = vec![1.0; d];
    for &(k, j) in &pairs {
        if c[(j, k)] < 0.0 {
            signs[j] = -1.0;
        }
    }
    Ok(Alignment {
        order: pairs.iter().map(|p| p.1).collect(),
        measure: pairs.iter().map(|p| p.0).collect(),
        corr: pairs.iter().map(|&(k, j)| c[(j, k)].abs()).collect(),
        signs,
    })
}
