//! Long-format ordinal panels: ingest, validation and group-time cells.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation of one unit in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    /// Index into the dataset's unit table.
    pub unit: u32,
    /// Position in [`PanelDataset::periods`].
    pub period: u16,
    /// Category index in `0..J`.
    pub outcome: u16,
    pub treated: bool,
    /// Index into the dataset's cluster table.
    pub cluster: u32,
}

/// Identity of a unit. Bootstrap copies of the same source unit differ in `copy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnitKey {
    pub source: u32,
    pub copy: u32,
}

/// Rows removed during ingest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub missing_outcome: usize,
    pub missing_covariate: usize,
    pub filtered_out: usize,
}

/// Column names used to read and write panel CSVs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub unit: String,
    pub period: String,
    pub outcome: String,
    pub treatment: String,
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Keep only rows whose raw `column` text equals `value`.
    #[serde(default)]
    pub filters: Vec<(String, String)>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            period: "period".into(),
            outcome: "outcome".into(),
            treatment: "treated".into(),
            cluster: None,
            covariates: Vec::new(),
            filters: Vec::new(),
        }
    }
}

/// Outcome counts of one group-time cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub treated: bool,
    pub period: usize,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl CellCounts {
    pub fn new(treated: bool, period: usize, counts: Vec<u64>) -> Self {
        let n = counts.iter().sum();
        Self {
            treated,
            period,
            counts,
            n,
        }
    }

    pub fn n_categories(&self) -> usize {
        self.counts.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn nonempty_categories(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn label(&self) -> String {
        format!("(d={}, t={})", u8::from(self.treated), self.period)
    }
}

/// A validated long-format panel of ordinal outcomes.
///
/// Immutable after construction. Category, period, unit and cluster labels
/// from the source are kept for reporting and for writing the panel back out.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    records: Vec<Record>,
    covariates: Vec<f64>,
    covariate_names: Vec<String>,
    n_categories: usize,
    periods: Vec<i64>,
    category_codes: Vec<i64>,
    units: Vec<UnitKey>,
    unit_labels: Option<Arc<Vec<String>>>,
    cluster_labels: Option<Arc<Vec<String>>>,
    n_clusters: usize,
    clustered: bool,
    dropped: DropReport,
}

/// Inputs for building a dataset from already-coded records.
#[derive(Debug, Clone, Default)]
pub struct PanelParts {
    pub records: Vec<Record>,
    pub n_categories: usize,
    pub periods: Vec<i64>,
    /// Row-major, `records.len() * covariate_names.len()` values.
    pub covariates: Vec<f64>,
    pub covariate_names: Vec<String>,
    /// Whether `Record::cluster` carries a declared clustering.
    pub clustered: bool,
}

impl PanelDataset {
    /// Validates coded records. Unit and cluster indices must be dense from 0.
    pub fn from_parts(parts: PanelParts) -> Result<Self> {
        let PanelParts {
            records,
            n_categories,
            periods,
            covariates,
            covariate_names,
            clustered,
        } = parts;
        if n_categories < 3 {
            return Err(Error::Load(format!(
                "ordinal outcome needs at least 3 categories, found {n_categories}"
            )));
        }
        if periods.is_empty() || periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Load(
                "periods must be non-empty and strictly increasing".into(),
            ));
        }
        let p = covariate_names.len();
        if covariates.len() != records.len() * p {
            return Err(Error::Load(format!(
                "expected {} covariate values, got {}",
                records.len() * p,
                covariates.len()
            )));
        }
        if covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::Load("covariates must be finite".into()));
        }
        let n_units = records
            .iter()
            .map(|r| r.unit as usize + 1)
            .max()
            .unwrap_or(0);
        let n_clusters = records
            .iter()
            .map(|r| r.cluster as usize + 1)
            .max()
            .unwrap_or(0);
        let mut group: Vec<Option<bool>> = vec![None; n_units];
        let mut seen = vec![false; n_units * periods.len()];
        for r in &records {
            if r.outcome as usize >= n_categories {
                return Err(Error::Load(format!(
                    "outcome index {} outside 0..{n_categories}",
                    r.outcome
                )));
            }
            if r.period as usize >= periods.len() {
                return Err(Error::Load(format!(
                    "period index {} out of range",
                    r.period
                )));
            }
            let slot = r.unit as usize * periods.len() + r.period as usize;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::Load(format!(
                    "unit {} appears more than once in period {}",
                    r.unit, periods[r.period as usize]
                )));
            }
            match group[r.unit as usize] {
                None => group[r.unit as usize] = Some(r.treated),
                Some(g) if g != r.treated => {
                    return Err(Error::Load(format!(
                        "treatment group of unit {} changes across periods",
                        r.unit
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            records,
            covariates,
            covariate_names,
            n_categories,
            category_codes: (0..n_categories as i64).collect(),
            periods,
            units: (0..n_units as u32)
                .map(|source| UnitKey { source, copy: 0 })
                .collect(),
            unit_labels: None,
            cluster_labels: None,
            n_clusters,
            clustered,
            dropped: DropReport::default(),
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    /// Source period labels; a record's `period` indexes this list.
    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    /// Source outcome code of each category index.
    pub fn category_codes(&self) -> &[i64] {
        &self.category_codes
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn is_clustered(&self) -> bool {
        self.clustered
    }

    pub fn dropped(&self) -> DropReport {
        self.dropped
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Covariate row of record `i`.
    pub fn covariates_of(&self, i: usize) -> &[f64] {
        let p = self.covariate_names.len();
        &self.covariates[i * p..(i + 1) * p]
    }

    pub fn unit_label(&self, unit: u32) -> String {
        let key = self.units[unit as usize];
        let base = match &self.unit_labels {
            Some(labels) => labels[key.source as usize].clone(),
            None => key.source.to_string(),
        };
        if key.copy == 0 {
            base
        } else {
            format!("{base}#{}", key.copy)
        }
    }

    pub fn cluster_label(&self, cluster: u32) -> String {
        match &self.cluster_labels {
            Some(labels) => labels[cluster as usize].clone(),
            None => cluster.to_string(),
        }
    }

    /// Number of distinct treated units.
    pub fn n_treated_units(&self) -> usize {
        let mut flags = vec![None; self.units.len()];
        for r in &self.records {
            flags[r.unit as usize] = Some(r.treated);
        }
        flags.iter().filter(|f| **f == Some(true)).count()
    }

    /// Outcome counts for every (group, period) cell in one pass; `[control, treated]`.
    pub fn cell_table(&self) -> Vec<[Vec<u64>; 2]> {
        let j = self.n_categories;
        let mut table = vec![[vec![0u64; j], vec![0u64; j]]; self.periods.len()];
        for r in &self.records {
            table[r.period as usize][usize::from(r.treated)][r.outcome as usize] += 1;
        }
        table
    }

    /// Counts of cell `(d, t)` with `t` a period position.
    pub fn cell_counts(&self, treated: bool, period: usize) -> Result<CellCounts> {
        if period >= self.periods.len() {
            return Err(Error::domain(format!(
                "period position {period} out of range (dataset has {})",
                self.periods.len()
            )));
        }
        let mut counts = vec![0u64; self.n_categories];
        for r in self
            .records
            .iter()
            .filter(|r| r.treated == treated && r.period as usize == period)
        {
            counts[r.outcome as usize] += 1;
        }
        let cell = CellCounts::new(treated, period, counts);
        if cell.n == 0 {
            return Err(Error::EmptyCell(format!(
                "no records in cell {}",
                cell.label()
            )));
        }
        Ok(cell)
    }

    /// Restricts the panel to two periods given by source label; they become
    /// positions 0 and 1 in the order given.
    pub fn select_periods(&self, first: i64, second: i64) -> Result<PanelDataset> {
        if first == second {
            return Err(Error::domain(format!(
                "the two periods must differ (both are {first})"
            )));
        }
        let pos = |label: i64| {
            self.periods
                .iter()
                .position(|&p| p == label)
                .ok_or_else(|| Error::domain(format!("unknown period {label}")))
        };
        let (a, b) = (pos(first)?, pos(second)?);
        let mut out = self.clone();
        out.records.clear();
        out.covariates.clear();
        let p = self.n_covariates();
        for (i, r) in self.records.iter().enumerate() {
            let period = if r.period as usize == a {
                0
            } else if r.period as usize == b {
                1
            } else {
                continue;
            };
            out.records.push(Record { period, ..*r });
            out.covariates
                .extend_from_slice(&self.covariates[i * p..(i + 1) * p]);
        }
        out.periods = vec![first, second];
        Ok(out)
    }

    /// The two pre-treatment periods of a longer panel.
    pub fn subset_pretreatment(&self, pre_periods: (i64, i64)) -> Result<PanelDataset> {
        self.select_periods(pre_periods.0, pre_periods.1)
    }

    /// Layout used by the cluster bootstrap; see [`PanelDataset::resample`].
    pub fn cluster_layout(&self) -> Result<ClusterLayout> {
        if !self.clustered {
            return Err(Error::DegenerateClustering(
                "dataset has no declared cluster column".into(),
            ));
        }
        let mut members = vec![Vec::new(); self.n_clusters];
        for (i, r) in self.records.iter().enumerate() {
            members[r.cluster as usize].push(i as u32);
        }
        let mut local_unit = vec![0u32; self.records.len()];
        let mut unit_sources = Vec::with_capacity(self.n_clusters);
        for m in &members {
            let mut map: HashMap<u32, u32> = HashMap::new();
            let mut sources = Vec::new();
            for &i in m {
                let u = self.records[i as usize].unit;
                let next = map.len() as u32;
                let local = *map.entry(u).or_insert_with(|| {
                    sources.push(u);
                    next
                });
                local_unit[i as usize] = local;
            }
            unit_sources.push(sources);
        }
        Ok(ClusterLayout {
            members,
            local_unit,
            unit_sources,
        })
    }

    /// Builds the dataset formed by the clusters in `draws`, in draw order.
    ///
    /// A cluster drawn k times contributes k copies of its records; each copy
    /// gets fresh unit and cluster indices.
    pub fn resample(&self, layout: &ClusterLayout, draws: &[u32]) -> PanelDataset {
        let p = self.n_covariates();
        let total: usize = draws
            .iter()
            .map(|&c| layout.members[c as usize].len())
            .sum();
        let mut records = Vec::with_capacity(total);
        let mut covariates = Vec::with_capacity(total * p);
        let mut units = Vec::new();
        let mut copies = vec![0u32; self.n_clusters];
        for (k, &c) in draws.iter().enumerate() {
            let base = units.len() as u32;
            let copy = copies[c as usize];
            copies[c as usize] += 1;
            for &src in &layout.unit_sources[c as usize] {
                units.push(UnitKey {
                    source: self.units[src as usize].source,
                    copy,
                });
            }
            for &i in &layout.members[c as usize] {
                let r = self.records[i as usize];
                records.push(Record {
                    unit: base + layout.local_unit[i as usize],
                    cluster: k as u32,
                    ..r
                });
                if p > 0 {
                    let i = i as usize;
                    covariates.extend_from_slice(&self.covariates[i * p..(i + 1) * p]);
                }
            }
        }
        PanelDataset {
            records,
            covariates,
            covariate_names: self.covariate_names.clone(),
            n_categories: self.n_categories,
            periods: self.periods.clone(),
            category_codes: self.category_codes.clone(),
            units,
            unit_labels: self.unit_labels.clone(),
            cluster_labels: None,
            n_clusters: draws.len(),
            clustered: true,
            dropped: self.dropped,
        }
    }

    /// Writes the panel with source labels, readable by [`read_csv`] under
    /// the same schema.
    pub fn write_csv<W: Write>(&self, writer: W, schema: &ColumnSchema) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            schema.unit.clone(),
            schema.period.clone(),
            schema.outcome.clone(),
            schema.treatment.clone(),
        ];
        if self.clustered {
            header.push(schema.cluster.clone().unwrap_or_else(|| "cluster".into()));
        }
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![
                self.unit_label(r.unit),
                self.periods[r.period as usize].to_string(),
                self.category_codes[r.outcome as usize].to_string(),
                u8::from(r.treated).to_string(),
            ];
            if self.clustered {
                row.push(self.cluster_label(r.cluster));
            }
            row.extend(self.covariates_of(i).iter().map(|x| format!("{x:?}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Load(e.to_string()))?;
        Ok(())
    }
}

/// Record membership of each cluster, precomputed for resampling.
#[derive(Debug, Clone)]
pub struct ClusterLayout {
    members: Vec<Vec<u32>>,
    local_unit: Vec<u32>,
    unit_sources: Vec<Vec<u32>>,
}

impl ClusterLayout {
    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Load(e.to_string())
}

fn is_missing(s: &str) -> bool {
    let s = s.trim();
    s.is_empty() || s == "NA"
}

/// Reads and validates a panel CSV from disk.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Load(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, schema)
}

/// Reads and validates a panel CSV.
///
/// Outcome codes are re-indexed to `0..J` in numeric order. Rows with a
/// missing outcome or covariate are dropped and counted.
pub fn read_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Load(format!("missing column `{name}`")))
    };
    let unit_col = col(&schema.unit)?;
    let period_col = col(&schema.period)?;
    let outcome_col = col(&schema.outcome)?;
    let treat_col = col(&schema.treatment)?;
    let cluster_col = schema.cluster.as_deref().map(col).transpose()?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;
    let filter_cols = schema
        .filters
        .iter()
        .map(|(c, v)| col(c).map(|i| (i, v.as_str())))
        .collect::<Result<Vec<_>>>()?;

    struct Row {
        unit: u32,
        period: i64,
        outcome: i64,
        treated: bool,
        cluster: u32,
    }

    let mut dropped = DropReport::default();
    let mut unit_ids: HashMap<String, u32> = HashMap::new();
    let mut unit_labels = Vec::new();
    let mut cluster_ids: HashMap<String, u32> = HashMap::new();
    let mut cluster_labels = Vec::new();
    let mut rows = Vec::new();
    let mut covariates = Vec::new();

    for (line, result) in rdr.records().enumerate() {
        let rec = result.map_err(csv_err)?;
        let line = line + 2;
        if filter_cols
            .iter()
            .any(|&(i, v)| rec.get(i).unwrap_or("") != v)
        {
            dropped.filtered_out += 1;
            continue;
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        if is_missing(field(outcome_col)) {
            dropped.missing_outcome += 1;
            continue;
        }
        if cov_cols.iter().any(|&i| is_missing(field(i))) {
            dropped.missing_covariate += 1;
            continue;
        }
        let required = |i: usize, name: &str| -> Result<&str> {
            let v = field(i);
            if is_missing(v) {
                Err(Error::Load(format!(
                    "line {line}: missing value in column `{name}`"
                )))
            } else {
                Ok(v)
            }
        };
        let unit = required(unit_col, &schema.unit)?;
        let period: i64 = required(period_col, &schema.period)?.parse().map_err(|_| {
            Error::Load(format!(
                "line {line}: period `{}` is not an integer",
                field(period_col)
            ))
        })?;
        let outcome: i64 = field(outcome_col).parse().map_err(|_| {
            Error::Load(format!(
                "line {line}: outcome `{}` is not an integer code",
                field(outcome_col)
            ))
        })?;
        let treated = match required(treat_col, &schema.treatment)? {
            "1" | "true" | "TRUE" | "True" => true,
            "0" | "false" | "FALSE" | "False" => false,
            other => {
                return Err(Error::Load(format!(
                    "line {line}: treatment value `{other}` is not binary"
                )))
            }
        };
        let cluster = match (cluster_col, schema.cluster.as_deref()) {
            (Some(i), Some(name)) => {
                let label = required(i, name)?;
                let next = cluster_ids.len() as u32;
                *cluster_ids.entry(label.to_string()).or_insert_with(|| {
                    cluster_labels.push(label.to_string());
                    next
                })
            }
            _ => 0,
        };
        let next = unit_ids.len() as u32;
        let unit = *unit_ids.entry(unit.to_string()).or_insert_with(|| {
            unit_labels.push(unit.to_string());
            next
        });
        for &i in &cov_cols {
            let v: f64 = field(i).parse().map_err(|_| {
                Error::Load(format!(
                    "line {line}: covariate `{}` is not numeric",
                    field(i)
                ))
            })?;
            covariates.push(v);
        }
        rows.push(Row {
            unit,
            period,
            outcome,
            treated,
            cluster,
        });
    }

    let codes: Vec<i64> = rows
        .iter()
        .map(|r| r.outcome)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let periods: Vec<i64> = rows
        .iter()
        .map(|r| r.period)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if codes.len() < 3 {
        return Err(Error::Load(format!(
            "ordinal outcome needs at least 3 categories, found {}",
            codes.len()
        )));
    }
    let code_index: BTreeMap<i64, u16> = codes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u16))
        .collect();
    let period_index: BTreeMap<i64, u16> = periods
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u16))
        .collect();

    let clustered = schema.cluster.is_some();
    let records: Vec<Record> = rows
        .iter()
        .map(|r| Record {
            unit: r.unit,
            period: period_index[&r.period],
            outcome: code_index[&r.outcome],
            treated: r.treated,
            cluster: if clustered { r.cluster } else { r.unit },
        })
        .collect();

    let mut data = PanelDataset::from_parts(PanelParts {
        records,
        n_categories: codes.len(),
        periods,
        covariates,
        covariate_names: schema.covariates.clone(),
        clustered,
    })
    .map_err(|e| match e {
        // Name the offending unit by its source label.
        Error::Load(msg) if msg.starts_with("unit ") => {
            let idx: Option<usize> = msg.split_whitespace().nth(1).and_then(|s| s.parse().ok());
            match idx {
                Some(i) => Error::Load(msg.replacen(
                    &format!("unit {i} "),
                    &format!("unit `{}` ", unit_labels[i]),
                    1,
                )),
                None => Error::Load(msg),
            }
        }
        other => other,
    })?;
    data.category_codes = codes;
    data.unit_labels = Some(Arc::new(unit_labels));
    if clustered {
        data.cluster_labels = Some(Arc::new(cluster_labels));
    } else {
        data.n_clusters = data.units.len();
    }
    data.dropped = dropped;
    Ok(data)
}
