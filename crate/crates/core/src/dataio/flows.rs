use std::fmt::Write as _;
use std::path::Path;

use super::{DataError, DatasetMeta};
use crate::numerics::{Real, Tensor};

pub const FLOW_CSV_HEADER: &str = "time_index,region_index,inflow,outflow";

/// Upper bound on `slots × regions` accepted from a file.
const MAX_CELLS: usize = 1 << 27;

/// Inflow and outflow counts, each a `[slots × regions]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDataset {
    pub meta: DatasetMeta,
    inflow: Tensor,
    outflow: Tensor,
}

impl FlowDataset {
    pub fn new(meta: DatasetMeta, inflow: Tensor, outflow: Tensor) -> Result<Self, DataError> {
        meta.validate()?;
        let (slots, regions) = inflow
            .dims2()
            .map_err(|e| DataError::Meta(e.to_string()))?;
        if outflow.shape() != inflow.shape() {
            return Err(DataError::Meta(format!(
                "inflow {:?} and outflow {:?} differ in shape",
                inflow.shape(),
                outflow.shape()
            )));
        }
        if regions != meta.n_regions {
            return Err(DataError::Meta(format!(
                "matrices have {regions} regions, metadata says {}",
                meta.n_regions
            )));
        }
        if slots == 0 {
            return Err(DataError::Empty);
        }
        let bad = inflow
            .data()
            .iter()
            .chain(outflow.data())
            .any(|v| !v.is_finite() || *v < 0.0);
        if bad {
            return Err(DataError::Meta("flows must be finite and nonnegative".into()));
        }
        Ok(Self {
            meta,
            inflow,
            outflow,
        })
    }

    pub fn slots(&self) -> usize {
        self.inflow.shape()[0]
    }

    pub fn regions(&self) -> usize {
        self.meta.n_regions
    }

    pub fn inflow(&self) -> &Tensor {
        &self.inflow
    }

    pub fn outflow(&self) -> &Tensor {
        &self.outflow
    }

    pub fn inflow_at(&self, slot: usize, region: usize) -> Real {
        self.inflow.at2(slot, region)
    }

    pub fn outflow_at(&self, slot: usize, region: usize) -> Real {
        self.outflow.at2(slot, region)
    }

    /// Slots `[0, end)` as a new dataset; the time-of-week origin is unchanged.
    pub fn prefix(&self, end: usize) -> Result<Self, DataError> {
        if end == 0 || end > self.slots() {
            return Err(DataError::SlotOutOfRange {
                slot: end,
                slots: self.slots(),
            });
        }
        let n = self.regions();
        let cut = |t: &Tensor| Tensor::matrix(end, n, t.data()[..end * n].to_vec()).unwrap();
        Ok(Self {
            meta: self.meta.clone(),
            inflow: cut(&self.inflow),
            outflow: cut(&self.outflow),
        })
    }

    /// Applies `f` to every flow value of both channels.
    pub fn map_values(&self, f: impl Fn(Real) -> Real) -> Self {
        Self {
            meta: self.meta.clone(),
            inflow: self.inflow.map(&f),
            outflow: self.outflow.map(&f),
        }
    }
}

/// Result of reading a flow CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvLoad {
    pub dataset: FlowDataset,
    /// `(slot, region)` cells absent from the file and filled with zero.
    pub missing_cells: usize,
}

pub fn load_flow_csv(csv_path: &Path, meta_path: &Path) -> Result<CsvLoad, DataError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| DataError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let meta = DatasetMeta::from_toml_str(&read(meta_path)?)?;
    let load = parse_flow_csv(&read(csv_path)?, meta)?;
    if load.missing_cells > 0 {
        log::warn!(
            "{}: {} (slot, region) cells missing, filled with 0",
            csv_path.display(),
            load.missing_cells
        );
    }
    Ok(load)
}

/// Parses `time_index,region_index,inflow,outflow` rows. Blank lines and lines
/// starting with `#` are skipped; the first other line must be the header.
pub fn parse_flow_csv(text: &str, meta: DatasetMeta) -> Result<CsvLoad, DataError> {
    meta.validate()?;
    let n = meta.n_regions;
    let mut rows: Vec<(usize, usize, usize, Real, Real)> = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line.trim() != FLOW_CSV_HEADER {
                return Err(DataError::Csv {
                    line: line_no,
                    reason: format!("expected header `{FLOW_CSV_HEADER}`"),
                });
            }
            header_seen = true;
            continue;
        }
        let (t, r, fi, fo) = parse_row(line, line_no, n)?;
        rows.push((line_no, t, r, fi, fo));
    }
    if !header_seen {
        return Err(DataError::Csv {
            line: 1,
            reason: "missing header".into(),
        });
    }
    let slots = match rows.iter().map(|r| r.1).max() {
        Some(t) => t + 1,
        None => return Err(DataError::Empty),
    };
    if slots.checked_mul(n).is_none_or(|c| c > MAX_CELLS) {
        return Err(DataError::TooLarge { slots, regions: n });
    }
    let mut inflow = vec![0.0; slots * n];
    let mut outflow = vec![0.0; slots * n];
    let mut seen = vec![false; slots * n];
    for &(line, t, r, fi, fo) in &rows {
        let cell = t * n + r;
        if seen[cell] {
            return Err(DataError::Csv {
                line,
                reason: format!("duplicate row for slot {t}, region {r}"),
            });
        }
        seen[cell] = true;
        inflow[cell] = fi;
        outflow[cell] = fo;
    }
    let missing_cells = seen.iter().filter(|s| !**s).count();
    let dataset = FlowDataset::new(
        meta,
        Tensor::matrix(slots, n, inflow).unwrap(),
        Tensor::matrix(slots, n, outflow).unwrap(),
    )?;
    Ok(CsvLoad {
        dataset,
        missing_cells,
    })
}

fn parse_row(line: &str, line_no: usize, n: usize) -> Result<(usize, usize, Real, Real), DataError> {
    let err = |reason: String| DataError::Csv {
        line: line_no,
        reason,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 fields, found {}", fields.len())));
    }
    let t: usize = fields[0]
        .parse()
        .map_err(|_| err(format!("bad time_index `{}`", fields[0])))?;
    let r: usize = fields[1]
        .parse()
        .map_err(|_| err(format!("bad region_index `{}`", fields[1])))?;
    if r >= n {
        return Err(err(format!("region_index {r} ≥ n_regions {n}")));
    }
    let flow = |s: &str, name: &str| -> Result<Real, DataError> {
        let v: Real = s.parse().map_err(|_| err(format!("bad {name} `{s}`")))?;
        if !v.is_finite() {
            return Err(err(format!("{name} is not finite")));
        }
        if v < 0.0 {
            return Err(err(format!("negative {name} {v}")));
        }
        Ok(v)
    };
    Ok((t, r, flow(fields[2], "inflow")?, flow(fields[3], "outflow")?))
}

/// Serializes every cell in slot-major order. `comment`, when given, becomes
/// a leading `# ` line.
pub fn write_flow_csv(data: &FlowDataset, comment: Option<&str>) -> String {
    let n = data.regions();
    let mut out = String::with_capacity(data.slots() * n * 24);
    if let Some(c) = comment {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str(FLOW_CSV_HEADER);
    out.push('\n');
    for t in 0..data.slots() {
        for r in 0..n {
            let _ = writeln!(out, "{t},{r},{},{}", data.inflow_at(t, r), data.outflow_at(t, r));
        }
    }
    out
}
