//! Importance Factor analysis: average attention maps over a validation
//! set, normalize to the unit interval, attribute weight mass to layers,
//! and select layers for ablation. Includes CSV and PGM heatmap export.

pub mod error;

pub use error::{IfError, Result};

use attention::AttentionMap;
use std::fs;
use std::path::Path;

/// Unit-interval importance heatmap with the same extents as the averaged
/// attention map it came from. For stacked multi-head maps, rows stay
/// head-major: row `h * num_layers + l` is head `h`, layer `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct IfMap {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    pub num_layers: usize,
    /// Set when the source map was constant, which leaves no range to
    /// normalize; every value is then 0.
    pub degenerate: bool,
}

impl IfMap {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Per-layer share of total importance, in percent. Non-negative and sums
/// to 100 up to rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerContribution {
    percentages: Vec<f64>,
}

impl LayerContribution {
    pub fn percentages(&self) -> &[f64] {
        &self.percentages
    }

    pub fn num_layers(&self) -> usize {
        self.percentages.len()
    }
}

/// Which end of the contribution ranking to pick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    Highest,
    Lowest,
}

impl SelectionMode {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionMode::Highest => "highest",
            SelectionMode::Lowest => "lowest",
        }
    }
}

/// Heatmap serialization target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatmapFormat {
    Csv,
    Pgm,
}

/// Elementwise arithmetic mean of attention maps with identical extents,
/// typically one map per validation sample.
pub fn average_maps(maps: &[AttentionMap]) -> Result<AttentionMap> {
    let first = maps
        .first()
        .ok_or_else(|| IfError::Contract("cannot average an empty map list".into()))?;
    for (i, m) in maps.iter().enumerate() {
        if m.rows() != first.rows() || m.cols() != first.cols() || m.num_layers != first.num_layers
        {
            return Err(IfError::Contract(format!(
                "map {i} is {}x{} over {} layers but map 0 is {}x{} over {}",
                m.rows(),
                m.cols(),
                m.num_layers,
                first.rows(),
                first.cols(),
                first.num_layers
            )));
        }
    }
    let mut sums = vec![0.0; first.rows() * first.cols()];
    for m in maps {
        for (acc, v) in sums.iter_mut().zip(m.values()) {
            *acc += v;
        }
    }
    let n = maps.len() as f64;
    for v in sums.iter_mut() {
        *v /= n;
    }
    Ok(AttentionMap::new(
        sums,
        first.rows(),
        first.cols(),
        first.num_layers,
        &first.mechanism,
    )
    .map_err(|e| IfError::Contract(e.to_string()))?)
}

/// Min-max normalize a (typically averaged) attention map over its global
/// range. A constant map has no range; it maps to all zeros with the
/// degenerate flag set.
pub fn importance_factor(ga: &AttentionMap) -> IfMap {
    let values = ga.values();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (values, degenerate) = if max > min {
        let range = max - min;
        (values.iter().map(|v| (v - min) / range).collect(), false)
    } else {
        (vec![0.0; values.len()], true)
    };
    IfMap {
        values,
        rows: ga.rows(),
        cols: ga.cols(),
        num_layers: ga.num_layers,
        degenerate,
    }
}

/// Share of total importance per layer, in percent. Multi-head maps first
/// average the per-layer sums across heads, so every layer is judged by
/// the same number of rows.
pub fn layer_contribution(ifmap: &IfMap) -> Result<LayerContribution> {
    let layers = ifmap.num_layers;
    let heads = ifmap.rows / layers;
    let mut sums = vec![0.0; layers];
    for h in 0..heads {
        for l in 0..layers {
            let row = h * layers + l;
            let start = row * ifmap.cols;
            sums[l] += ifmap.values[start..start + ifmap.cols].iter().sum::<f64>();
        }
    }
    for s in sums.iter_mut() {
        *s /= heads as f64;
    }
    let total: f64 = sums.iter().sum();
    if total <= 0.0 {
        return Err(IfError::Contract(
            "importance map is all zeros; nothing to attribute".into(),
        ));
    }
    Ok(LayerContribution {
        percentages: sums.iter().map(|s| s * 100.0 / total).collect(),
    })
}

/// Indices of the `k` largest (or smallest) contributions, best first,
/// ties resolved toward the lower index.
pub fn select_layers(
    contrib: &LayerContribution,
    k: usize,
    mode: SelectionMode,
) -> Result<Vec<usize>> {
    let n = contrib.percentages.len();
    if k > n {
        return Err(IfError::Contract(format!(
            "cannot select {k} layers out of {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (contrib.percentages[a], contrib.percentages[b]);
        let primary = match mode {
            SelectionMode::Highest => pb.partial_cmp(&pa).unwrap(),
            SelectionMode::Lowest => pa.partial_cmp(&pb).unwrap(),
        };
        primary.then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

/// Write an importance map as CSV (`layer,feature,if`, six decimals; the
/// layer column holds the map row index, head-major for stacked banks) or
/// as an ASCII P2 graymap with values scaled to 0..=255.
pub fn export_heatmap(ifmap: &IfMap, path: &Path, format: HeatmapFormat) -> Result<()> {
    let content = match format {
        HeatmapFormat::Csv => heatmap_to_csv(ifmap),
        HeatmapFormat::Pgm => heatmap_to_pgm(ifmap),
    };
    fs::write(path, content)?;
    Ok(())
}

fn heatmap_to_csv(ifmap: &IfMap) -> String {
    let mut out = String::from("layer,feature,if\n");
    for r in 0..ifmap.rows {
        for c in 0..ifmap.cols {
            out.push_str(&format!("{r},{c},{:.6}\n", ifmap.get(r, c)));
        }
    }
    out
}

fn heatmap_to_pgm(ifmap: &IfMap) -> String {
    let mut out = format!("P2\n{} {}\n255\n", ifmap.cols, ifmap.rows);
    for r in 0..ifmap.rows {
        let row: Vec<String> = (0..ifmap.cols)
            .map(|c| format!("{}", (ifmap.get(r, c) * 255.0).round() as u32))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Read a CSV heatmap written by [`export_heatmap`]. The result treats
/// every row as its own layer; regroup via `num_layers` if the source was
/// a stacked multi-head map.
pub fn read_heatmap_csv(path: &Path) -> Result<IfMap> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    match lines.next() {
        Some("layer,feature,if") => {}
        other => {
            return Err(IfError::Format(format!(
                "expected the header layer,feature,if, got {other:?}"
            )));
        }
    }
    let mut cells = Vec::new();
    let mut rows = 0usize;
    let mut cols = 0usize;
    for (i, line) in lines.enumerate() {
        let mut parts = line.split(',');
        let parse = |part: Option<&str>, what: &str| -> Result<f64> {
            part.and_then(|p| p.trim().parse::<f64>().ok())
                .ok_or_else(|| IfError::Format(format!("row {}: bad {what} in {line:?}", i + 2)))
        };
        let r = parse(parts.next(), "layer")? as usize;
        let c = parse(parts.next(), "feature")? as usize;
        let v = parse(parts.next(), "if")?;
        if parts.next().is_some() {
            return Err(IfError::Format(format!(
                "row {}: too many fields in {line:?}",
                i + 2
            )));
        }
        rows = rows.max(r + 1);
        cols = cols.max(c + 1);
        cells.push((r, c, v));
    }
    if cells.len() != rows * cols {
        return Err(IfError::Format(format!(
            "expected {rows}x{cols} = {} cells, got {}",
            rows * cols,
            cells.len()
        )));
    }
    let mut values = vec![f64::NAN; rows * cols];
    for (r, c, v) in cells {
        values[r * cols + c] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(IfError::Format("heatmap has missing cells".into()));
    }
    let degenerate = values.iter().all(|&v| v == 0.0);
    Ok(IfMap {
        values,
        rows,
        cols,
        num_layers: rows,
        degenerate,
    })
}
