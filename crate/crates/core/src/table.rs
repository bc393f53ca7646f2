//! Unit tables: identifiers, optional block/cluster labels, pre-treatment
//! feature vectors, and observed binary labels.
//!
//! Tables are immutable after construction and safe to share across resample
//! workers. Ingestion accepts delimited text (comma separator, header row,
//! UTF-8, "." decimal) with a column mapping binding named columns to roles.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AuditError, Result};

/// One named missingness-indicator column (R_ij for variable j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseColumn {
    pub name: String,
    pub values: Vec<u8>,
}

/// Units with pre-treatment features and observed labels.
///
/// Row order is the input order and is preserved everywhere; all engine
/// reductions run in this order so results do not depend on thread count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTable {
    ids: Vec<String>,
    blocks: Vec<Option<String>>,
    clusters: Vec<Option<String>>,
    locations: Vec<Option<(f64, f64)>>,
    feature_names: Vec<String>,
    /// Row-major feature matrix, every row of length `d`.
    features: Vec<Vec<f64>>,
    treated: Option<Vec<u8>>,
    selected: Option<Vec<u8>>,
    responses: Vec<ResponseColumn>,
}

/// Everything needed to construct a table programmatically.
#[derive(Debug, Clone, Default)]
pub struct TableBuilder {
    pub ids: Vec<String>,
    pub blocks: Vec<Option<String>>,
    pub clusters: Vec<Option<String>>,
    pub locations: Vec<Option<(f64, f64)>>,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub treated: Option<Vec<u8>>,
    pub selected: Option<Vec<u8>>,
    pub responses: Vec<ResponseColumn>,
}

impl TableBuilder {
    pub fn build(self) -> Result<UnitTable> {
        UnitTable::new(self)
    }
}

impl UnitTable {
    pub fn new(b: TableBuilder) -> Result<UnitTable> {
        let n = b.ids.len();
        if n == 0 {
            return Err(AuditError::Data("no data rows".into()));
        }
        let d = b.features.first().map(|r| r.len()).unwrap_or(0);
        if b.features.len() != n {
            return Err(AuditError::Data(format!(
                "{} feature rows for {} ids",
                b.features.len(),
                n
            )));
        }
        for (i, row) in b.features.iter().enumerate() {
            if row.len() != d {
                return Err(AuditError::Data(format!(
                    "row {} (id {}) has {} features, expected {}",
                    i + 1,
                    b.ids[i],
                    row.len(),
                    d
                )));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(AuditError::Data(format!(
                        "non-finite feature at row {} (id {}), column {}",
                        i + 1,
                        b.ids[i],
                        j
                    )));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (i, id) in b.ids.iter().enumerate() {
            if !seen.insert(id.clone()) {
                return Err(AuditError::Data(format!(
                    "duplicate unit id {:?} at row {}",
                    id,
                    i + 1
                )));
            }
        }
        let blocks = if b.blocks.is_empty() {
            vec![None; n]
        } else {
            b.blocks
        };
        let clusters = if b.clusters.is_empty() {
            vec![None; n]
        } else {
            b.clusters
        };
        let locations = if b.locations.is_empty() {
            vec![None; n]
        } else {
            b.locations
        };
        for (name, col) in [("block", &blocks), ("cluster", &clusters)] {
            if col.len() != n {
                return Err(AuditError::Data(format!("{name} column length mismatch")));
            }
        }
        if locations.len() != n {
            return Err(AuditError::Data("location column length mismatch".into()));
        }
        for (label, col) in [("treated", &b.treated), ("selected", &b.selected)] {
            if let Some(v) = col {
                if v.len() != n {
                    return Err(AuditError::Data(format!("{label} column length mismatch")));
                }
                if let Some(bad) = v.iter().position(|x| *x > 1) {
                    return Err(AuditError::Data(format!(
                        "{label} label at row {} is not 0/1",
                        bad + 1
                    )));
                }
            }
        }
        for rc in &b.responses {
            if rc.values.len() != n {
                return Err(AuditError::Data(format!(
                    "response column {:?} length mismatch",
                    rc.name
                )));
            }
            if let Some(bad) = rc.values.iter().position(|x| *x > 1) {
                return Err(AuditError::Data(format!(
                    "response column {:?} at row {} is not 0/1",
                    rc.name,
                    bad + 1
                )));
            }
        }
        let mut rseen = BTreeSet::new();
        for rc in &b.responses {
            if !rseen.insert(rc.name.clone()) {
                return Err(AuditError::Data(format!(
                    "duplicate response column {:?}",
                    rc.name
                )));
            }
        }
        let feature_names = if b.feature_names.is_empty() {
            (0..d).map(|j| format!("f{j}")).collect()
        } else if b.feature_names.len() == d {
            b.feature_names
        } else {
            return Err(AuditError::Data(format!(
                "{} feature names for {} feature columns",
                b.feature_names.len(),
                d
            )));
        };
        Ok(UnitTable {
            ids: b.ids,
            blocks,
            clusters,
            locations,
            feature_names,
            features: b.features,
            treated: b.treated,
            selected: b.selected,
            responses: b.responses,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn d(&self) -> usize {
        self.features.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn blocks(&self) -> &[Option<String>] {
        &self.blocks
    }

    pub fn clusters(&self) -> &[Option<String>] {
        &self.clusters
    }

    pub fn locations(&self) -> &[Option<(f64, f64)>] {
        &self.locations
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn feature_rows(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.features.iter().map(|r| r[j]).collect()
    }

    pub fn treated(&self) -> Option<&[u8]> {
        self.treated.as_deref()
    }

    pub fn selected(&self) -> Option<&[u8]> {
        self.selected.as_deref()
    }

    pub fn responses(&self) -> &[ResponseColumn] {
        &self.responses
    }

    /// Distinct block labels in sorted order. Units without a block are ignored.
    pub fn block_ids(&self) -> Vec<String> {
        let mut set: Vec<String> = self
            .blocks
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        set.sort();
        set
    }

    /// Distinct cluster labels in order of first appearance.
    pub fn cluster_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in self.clusters.iter().flatten() {
            if seen.insert(c.clone()) {
                out.push(c.clone());
            }
        }
        out
    }

    /// SHA-256 over the dimensions and the raw feature block (row-major,
    /// little-endian f64). Identifies the ingested data in reports.
    pub fn feature_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n() as u64).to_le_bytes());
        hasher.update((self.d() as u64).to_le_bytes());
        for row in &self.features {
            for v in row {
                hasher.update(v.to_le_bytes());
            }
        }
        hex_string(&hasher.finalize())
    }

    /// Copy of the table with the given feature matrix (same shape).
    pub fn with_features(&self, features: Vec<Vec<f64>>) -> Result<UnitTable> {
        if features.len() != self.n() {
            return Err(AuditError::Shape("feature row count changed".into()));
        }
        let mut t = self.clone();
        t.features = features;
        Ok(t)
    }

    /// Copy of the table with the observed treatment labels replaced.
    pub fn with_treated(&self, treated: Vec<u8>) -> Result<UnitTable> {
        if treated.len() != self.n() {
            return Err(AuditError::Shape("treated length mismatch".into()));
        }
        let mut t = self.clone();
        t.treated = Some(treated);
        Ok(t)
    }

    pub fn with_selected(&self, selected: Vec<u8>) -> Result<UnitTable> {
        if selected.len() != self.n() {
            return Err(AuditError::Shape("selected length mismatch".into()));
        }
        let mut t = self.clone();
        t.selected = Some(selected);
        Ok(t)
    }

    pub fn with_responses(&self, responses: Vec<ResponseColumn>) -> Result<UnitTable> {
        let n = self.n();
        let mut seen = BTreeSet::new();
        for rc in &responses {
            if rc.values.len() != n {
                return Err(AuditError::Data(format!(
                    "response column {:?} length mismatch",
                    rc.name
                )));
            }
            if rc.values.iter().any(|x| *x > 1) {
                return Err(AuditError::Data(format!(
                    "response column {:?} has non-binary entries",
                    rc.name
                )));
            }
            if !seen.insert(rc.name.clone()) {
                return Err(AuditError::Data(format!(
                    "duplicate response column {:?}",
                    rc.name
                )));
            }
        }
        let mut t = self.clone();
        t.responses = responses;
        Ok(t)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Binds named file columns to table roles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub id: String,
    #[serde(default)]
    pub block: Option<String>,
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default)]
    pub lat: Option<String>,
    #[serde(default)]
    pub lon: Option<String>,
    #[serde(default)]
    pub treated: Option<String>,
    #[serde(default)]
    pub selected: Option<String>,
    /// Explicit feature columns, in order.
    #[serde(default)]
    pub features: Vec<String>,
    /// Alternative to `features`: select every header starting with this
    /// prefix, in header order.
    #[serde(default)]
    pub feature_prefix: Option<String>,
    /// Missingness-indicator columns (one per audited variable).
    #[serde(default)]
    pub responses: Vec<String>,
}

/// Ingestion diagnostics written next to outputs as a JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub source: String,
    pub rows: usize,
    pub feature_dim: usize,
    pub feature_columns: Vec<String>,
    pub feature_hash: String,
    pub warnings: Vec<String>,
    /// Free-text provenance (pre-treatment window, sensor notes) echoed from
    /// the config; upstream aggregation policy is recorded here, not modeled.
    pub provenance: Option<String>,
}

/// Load a delimited text file under the given column mapping.
pub fn load_units(path: &Path, mapping: &ColumnMapping) -> Result<(UnitTable, IngestionReport)> {
    let raw = std::fs::read_to_string(path).map_err(|source| AuditError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_units_from_str(&raw, mapping, &path.display().to_string())
}

pub fn load_units_from_str(
    raw: &str,
    mapping: &ColumnMapping,
    source: &str,
) -> Result<(UnitTable, IngestionReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(raw.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source_err| AuditError::Csv {
            path: source.to_string(),
            source: source_err,
        })?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AuditError::Data(format!("column {name:?} not found in header")))
    };
    let opt_col = |name: &Option<String>| -> Result<Option<usize>> {
        name.as_ref().map(|n| col(n)).transpose()
    };

    let id_idx = col(&mapping.id)?;
    let block_idx = opt_col(&mapping.block)?;
    let cluster_idx = opt_col(&mapping.cluster)?;
    let lat_idx = opt_col(&mapping.lat)?;
    let lon_idx = opt_col(&mapping.lon)?;
    let treated_idx = opt_col(&mapping.treated)?;
    let selected_idx = opt_col(&mapping.selected)?;
    if lat_idx.is_some() != lon_idx.is_some() {
        return Err(AuditError::Data("lat and lon must be mapped together".into()));
    }

    let feature_names: Vec<String> = if !mapping.features.is_empty() {
        mapping.features.clone()
    } else if let Some(prefix) = &mapping.feature_prefix {
        headers
            .iter()
            .filter(|h| h.starts_with(prefix.as_str()))
            .cloned()
            .collect()
    } else {
        return Err(AuditError::Data(
            "column mapping declares no feature columns".into(),
        ));
    };
    if feature_names.is_empty() {
        return Err(AuditError::Data(
            "column mapping matched no feature columns".into(),
        ));
    }
    let feature_idx: Vec<usize> = feature_names
        .iter()
        .map(|n| col(n))
        .collect::<Result<_>>()?;
    let response_idx: Vec<usize> = mapping
        .responses
        .iter()
        .map(|n| col(n))
        .collect::<Result<_>>()?;

    let mut b = TableBuilder {
        feature_names: feature_names.clone(),
        ..Default::default()
    };
    let mut treated = Vec::new();
    let mut selected = Vec::new();
    let mut responses: Vec<Vec<u8>> = vec![Vec::new(); response_idx.len()];

    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|source_err| AuditError::Csv {
            path: source.to_string(),
            source: source_err,
        })?;
        let row = row_no + 1;
        let get = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| AuditError::Data(format!("row {row} is short ({} fields)", record.len())))
        };
        b.ids.push(get(id_idx)?.to_string());
        b.blocks.push(opt_string(block_idx.map(get).transpose()?));
        b.clusters.push(opt_string(cluster_idx.map(get).transpose()?));
        let loc = match (lat_idx, lon_idx) {
            (Some(la), Some(lo)) => {
                let lat = parse_f64(get(la)?, row, mapping.lat.as_deref().unwrap_or("lat"))?;
                let lon = parse_f64(get(lo)?, row, mapping.lon.as_deref().unwrap_or("lon"))?;
                Some((lat, lon))
            }
            _ => None,
        };
        b.locations.push(loc);
        let mut frow = Vec::with_capacity(feature_idx.len());
        for (name, &idx) in feature_names.iter().zip(&feature_idx) {
            let raw_cell = get(idx)?;
            if raw_cell.is_empty() {
                return Err(AuditError::Data(format!(
                    "missing feature {name:?} at row {row}"
                )));
            }
            let v = parse_f64(raw_cell, row, name)?;
            if !v.is_finite() {
                return Err(AuditError::Data(format!(
                    "non-finite feature {name:?} at row {row}"
                )));
            }
            frow.push(v);
        }
        b.features.push(frow);
        if let Some(idx) = treated_idx {
            treated.push(parse_binary(get(idx)?, row, mapping.treated.as_deref().unwrap())?);
        }
        if let Some(idx) = selected_idx {
            selected.push(parse_binary(get(idx)?, row, mapping.selected.as_deref().unwrap())?);
        }
        for (slot, (&idx, name)) in responses
            .iter_mut()
            .zip(response_idx.iter().zip(&mapping.responses))
        {
            slot.push(parse_binary(get(idx)?, row, name)?);
        }
    }

    if b.ids.is_empty() {
        return Err(AuditError::Data("no data rows".into()));
    }
    b.treated = treated_idx.map(|_| treated);
    b.selected = selected_idx.map(|_| selected);
    b.responses = mapping
        .responses
        .iter()
        .zip(responses)
        .map(|(name, values)| ResponseColumn {
            name: name.clone(),
            values,
        })
        .collect();

    let table = b.build()?;
    let report = IngestionReport {
        source: source.to_string(),
        rows: table.n(),
        feature_dim: table.d(),
        feature_columns: feature_names,
        feature_hash: table.feature_hash(),
        warnings: Vec::new(),
        provenance: None,
    };
    Ok((table, report))
}

fn opt_string(v: Option<&str>) -> Option<String> {
    match v {
        Some("") | None => None,
        Some(s) => Some(s.to_string()),
    }
}

fn parse_f64(s: &str, row: usize, column: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| AuditError::Data(format!("cannot parse {s:?} as a number at row {row}, column {column:?}")))
}

fn parse_binary(s: &str, row: usize, column: &str) -> Result<u8> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(AuditError::Data(format!(
            "label column {column:?} at row {row} must be 0 or 1, got {other:?}"
        ))),
    }
}

/// Serialize a table back to delimited text with the same column roles.
pub fn write_units(path: &Path, table: &UnitTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|source| AuditError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let mut header = vec!["unit_id".to_string()];
    let has_block = table.blocks.iter().any(Option::is_some);
    let has_cluster = table.clusters.iter().any(Option::is_some);
    let has_loc = table.locations.iter().any(Option::is_some);
    if has_block {
        header.push("block".into());
    }
    if has_cluster {
        header.push("cluster".into());
    }
    if has_loc {
        header.push("lat".into());
        header.push("lon".into());
    }
    header.extend(table.feature_names.iter().cloned());
    if table.treated.is_some() {
        header.push("treated".into());
    }
    if table.selected.is_some() {
        header.push("selected".into());
    }
    for rc in &table.responses {
        header.push(rc.name.clone());
    }
    w.write_record(&header).map_err(|source| AuditError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    for i in 0..table.n() {
        let mut rec = vec![table.ids[i].clone()];
        if has_block {
            rec.push(table.blocks[i].clone().unwrap_or_default());
        }
        if has_cluster {
            rec.push(table.clusters[i].clone().unwrap_or_default());
        }
        if has_loc {
            match table.locations[i] {
                Some((lat, lon)) => {
                    rec.push(format_f64(lat));
                    rec.push(format_f64(lon));
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        for v in &table.features[i] {
            rec.push(format_f64(*v));
        }
        if let Some(t) = &table.treated {
            rec.push(t[i].to_string());
        }
        if let Some(s) = &table.selected {
            rec.push(s[i].to_string());
        }
        for rc in &table.responses {
            rec.push(rc.values[i].to_string());
        }
        w.write_record(&rec).map_err(|source| AuditError::Csv {
            path: path.display().to_string(),
            source,
        })?;
    }
    w.flush().map_err(|source| AuditError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

fn format_f64(v: f64) -> String {
    // Shortest representation that round-trips the exact f64 value.
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Center each feature column to mean 0 and scale to unit variance
/// (population SD). Constant columns are left at 0 and flagged.
///
/// The transform depends only on the features, never on labels, and is
/// computed once before any resampling so it is identical across resamples.
pub fn standardize_features(table: &UnitTable) -> Result<(UnitTable, Vec<usize>)> {
    let n = table.n();
    if n < 2 {
        return Err(AuditError::Data(
            "standardization needs at least 2 units".into(),
        ));
    }
    let d = table.d();
    let mut features = table.features.clone();
    let mut constant = Vec::new();
    for j in 0..d {
        let mean = features.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = features
            .iter()
            .map(|r| {
                let c = r[j] - mean;
                c * c
            })
            .sum::<f64>()
            / n as f64;
        if var == 0.0 {
            constant.push(j);
            for row in features.iter_mut() {
                row[j] = 0.0;
            }
        } else {
            let sd = var.sqrt();
            for row in features.iter_mut() {
                row[j] = (row[j] - mean) / sd;
            }
        }
    }
    Ok((table.with_features(features)?, constant))
}
