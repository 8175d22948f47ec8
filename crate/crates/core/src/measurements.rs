//! Measurement records, dataset I/O and fit-point preparation.
//!
//! A record is one (model, checkpoint, quantization) observation. The
//! degradation `qid` is always recomputed as `loss_q - loss_16` and never read
//! from input.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Bit width used for the unquantized reference checkpoint.
pub const BASELINE_BITS: f64 = 16.0;

/// Default lower bound on QiD for log-space fitting, nats/token.
pub const DEFAULT_POSITIVITY_FLOOR: f64 = 1e-4;

/// CSV header without the optional leading `model_id` column.
pub const CSV_FIELDS: [&str; 7] = [
    "suite",
    "quant_method",
    "bits",
    "n_nonembed",
    "tokens",
    "loss_q",
    "loss_16",
];

const MODEL_ID: &str = "model_id";

/// Quantization-induced degradation: loss after quantization minus loss of
/// the 16-bit checkpoint. May be negative.
pub fn compute_qid(loss_q: f64, loss_16: f64) -> Result<f64> {
    check_loss("loss_q", loss_q)?;
    check_loss("loss_16", loss_16)?;
    Ok(loss_q - loss_16)
}

fn check_loss(field: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::validation(field, format!("must be finite, got {value}")));
    }
    if value <= 0.0 {
        return Err(Error::validation(field, format!("must be positive, got {value}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    model_id: String,
    suite: String,
    quant_method: String,
    n_nonembed: u64,
    tokens: u64,
    bits: f64,
    loss_q: f64,
    loss_16: f64,
    qid: f64,
}

impl MeasurementRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model_id: impl Into<String>,
        suite: impl Into<String>,
        quant_method: impl Into<String>,
        n_nonembed: u64,
        tokens: u64,
        bits: f64,
        loss_q: f64,
        loss_16: f64,
    ) -> Result<Self> {
        if n_nonembed < 1 {
            return Err(Error::validation("n_nonembed", "out of range (must be >= 1)"));
        }
        if tokens < 1 {
            return Err(Error::validation("tokens", "out of range (must be >= 1)"));
        }
        if !(bits.is_finite() && bits > 0.0 && bits <= BASELINE_BITS) {
            return Err(Error::validation(
                "bits",
                format!("out of range ({bits} not in (0, 16])"),
            ));
        }
        let qid = compute_qid(loss_q, loss_16)?;
        Ok(Self {
            model_id: model_id.into(),
            suite: suite.into(),
            quant_method: quant_method.into(),
            n_nonembed,
            tokens,
            bits,
            loss_q,
            loss_16,
            qid,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn suite(&self) -> &str {
        &self.suite
    }

    pub fn quant_method(&self) -> &str {
        &self.quant_method
    }

    /// Non-embedding parameter count.
    pub fn n_nonembed(&self) -> u64 {
        self.n_nonembed
    }

    /// Training tokens seen by the checkpoint.
    pub fn tokens(&self) -> u64 {
        self.tokens
    }

    pub fn bits(&self) -> f64 {
        self.bits
    }

    pub fn loss_q(&self) -> f64 {
        self.loss_q
    }

    pub fn loss_16(&self) -> f64 {
        self.loss_16
    }

    pub fn qid(&self) -> f64 {
        self.qid
    }

    pub fn is_baseline(&self) -> bool {
        self.bits == BASELINE_BITS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Json,
}

impl DataFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DataFormat::Csv),
            "json" => Some(DataFormat::Json),
            _ => None,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "json" => Ok(DataFormat::Json),
            other => Err(Error::validation("format", format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMeta {
    pub source: Option<String>,
    /// Seconds since the Unix epoch at load time.
    pub loaded_at: u64,
    /// Which tokenizer the token counts and losses refer to. Recorded, never checked.
    pub token_convention: Option<String>,
    /// Provenance entries, e.g. generator identifier and seed for synthetic data.
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<MeasurementRecord>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(records: Vec<MeasurementRecord>, meta: DatasetMeta) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Self { records, meta })
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_token_convention(mut self, note: impl Into<String>) -> Self {
        self.meta.token_convention = Some(note.into());
        self
    }
}

/// Reads a dataset from `source`. `source_name` is stored in the metadata.
pub fn load_dataset<R: Read>(
    source: R,
    format: DataFormat,
    source_name: Option<&str>,
) -> Result<Dataset> {
    let records = match format {
        DataFormat::Csv => read_csv(source)?,
        DataFormat::Json => read_json(source)?,
    };
    let meta = DatasetMeta {
        source: source_name.map(str::to_string),
        loaded_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        ..DatasetMeta::default()
    };
    Dataset::new(records, meta)
}

/// Loads a dataset from a file, inferring the format from the extension
/// unless one is given.
pub fn load_dataset_path(path: &Path, format: Option<DataFormat>) -> Result<Dataset> {
    let format = match format.or_else(|| DataFormat::from_path(path)) {
        Some(f) => f,
        None => {
            return Err(Error::validation(
                "format",
                format!("cannot infer format of {}; pass csv or json", path.display()),
            ))
        }
    };
    let file = std::fs::File::open(path)?;
    load_dataset(file, format, Some(&path.display().to_string()))
}

fn parse_count(field: &str, text: &str) -> Result<u64> {
    let value = parse_number(field, text)?;
    count_from_f64(field, value)
}

fn count_from_f64(field: &str, value: f64) -> Result<u64> {
    if !value.is_finite() || value < 1.0 {
        return Err(Error::validation(field, format!("out of range ({value} < 1)")));
    }
    if value.fract() != 0.0 || value > 9.007_199_254_740_992e15 {
        return Err(Error::validation(
            field,
            format!("must be an integer count, got {value}"),
        ));
    }
    Ok(value as u64)
}

fn parse_number(field: &str, text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::validation(field, format!("is not numeric: `{text}`")))
}

fn at_row(row: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Row { .. } => e,
        other => Error::Row {
            row,
            message: other.to_string(),
        },
    }
}

fn read_csv<R: Read>(source: R) -> Result<Vec<MeasurementRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let with_id = header.first().map(String::as_str) == Some(MODEL_ID);
    let expected: Vec<&str> = if with_id {
        std::iter::once(MODEL_ID).chain(CSV_FIELDS).collect()
    } else {
        CSV_FIELDS.to_vec()
    };
    if header != expected {
        return Err(Error::validation(
            "header",
            format!(
                "must be `{}` (optionally led by `model_id`), got `{}`",
                CSV_FIELDS.join(","),
                header.join(",")
            ),
        ));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Row {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str> {
            row.get(idx).ok_or_else(|| Error::Row {
                row: row_no,
                message: format!("missing column {}", expected[idx]),
            })
        };
        if row.len() > expected.len() {
            return Err(Error::Row {
                row: row_no,
                message: format!("expected {} columns, found {}", expected.len(), row.len()),
            });
        }
        let off = usize::from(with_id);
        let record = (|| {
            let model_id = if with_id { field(0)? } else { "" };
            MeasurementRecord::new(
                model_id,
                field(off)?,
                field(off + 1)?,
                parse_count("n_nonembed", field(off + 3)?)?,
                parse_count("tokens", field(off + 4)?)?,
                parse_number("bits", field(off + 2)?)?,
                parse_number("loss_q", field(off + 5)?)?,
                parse_number("loss_16", field(off + 6)?)?,
            )
        })()
        .map_err(at_row(row_no))?;
        records.push(record);
    }
    Ok(records)
}

fn read_json<R: Read>(source: R) -> Result<Vec<MeasurementRecord>> {
    let value: Value = serde_json::from_reader(source)?;
    let items = match value {
        Value::Array(items) => items,
        _ => return Err(Error::validation("document", "must be a JSON array of records")),
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| json_record(item).map_err(at_row(i + 1)))
        .collect()
}

fn json_record(item: &Value) -> Result<MeasurementRecord> {
    let obj = item
        .as_object()
        .ok_or_else(|| Error::validation("record", "must be a JSON object"))?;
    for key in obj.keys() {
        if key != MODEL_ID && !CSV_FIELDS.contains(&key.as_str()) {
            return Err(Error::UnknownField(key.clone()));
        }
    }
    let text = |obj: &Map<String, Value>, key: &str| -> Result<String> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(Error::validation(key, "must be a string")),
            None => Err(Error::validation(key, "is missing")),
        }
    };
    let number = |key: &str| -> Result<f64> {
        match obj.get(key) {
            Some(Value::Number(n)) => n
                .as_f64()
                .ok_or_else(|| Error::validation(key, "is not representable")),
            Some(_) => Err(Error::validation(key, "is not numeric")),
            None => Err(Error::validation(key, "is missing")),
        }
    };
    let model_id = match obj.get(MODEL_ID) {
        None => String::new(),
        Some(_) => text(obj, MODEL_ID)?,
    };
    MeasurementRecord::new(
        model_id,
        text(obj, "suite")?,
        text(obj, "quant_method")?,
        count_from_f64("n_nonembed", number("n_nonembed")?)?,
        count_from_f64("tokens", number("tokens")?)?,
        number("bits")?,
        number("loss_q")?,
        number("loss_16")?,
    )
}

/// Writes records in the CSV schema. The `model_id` column is emitted only
/// when at least one record carries an identifier.
pub fn write_csv<W: Write>(dataset: &Dataset, sink: W) -> Result<()> {
    let with_id = dataset.records.iter().any(|r| !r.model_id.is_empty());
    let mut writer = csv::WriterBuilder::new().from_writer(sink);
    if with_id {
        writer.write_record(std::iter::once(MODEL_ID).chain(CSV_FIELDS))?;
    } else {
        writer.write_record(CSV_FIELDS)?;
    }
    for r in &dataset.records {
        let mut row = Vec::with_capacity(8);
        if with_id {
            row.push(r.model_id.clone());
        }
        row.extend([
            r.suite.clone(),
            r.quant_method.clone(),
            r.bits.to_string(),
            r.n_nonembed.to_string(),
            r.tokens.to_string(),
            r.loss_q.to_string(),
            r.loss_16.to_string(),
        ]);
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(dataset: &Dataset, mut sink: W) -> Result<()> {
    let items: Vec<Value> = dataset
        .records
        .iter()
        .map(|r| {
            let mut obj = Map::new();
            if !r.model_id.is_empty() {
                obj.insert(MODEL_ID.into(), Value::from(r.model_id.clone()));
            }
            obj.insert("suite".into(), Value::from(r.suite.clone()));
            obj.insert("quant_method".into(), Value::from(r.quant_method.clone()));
            obj.insert("bits".into(), Value::from(r.bits));
            obj.insert("n_nonembed".into(), Value::from(r.n_nonembed));
            obj.insert("tokens".into(), Value::from(r.tokens));
            obj.insert("loss_q".into(), Value::from(r.loss_q));
            obj.insert("loss_16".into(), Value::from(r.loss_16));
            Value::Object(obj)
        })
        .collect();
    serde_json::to_writer_pretty(&mut sink, &items)?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn write_dataset<W: Write>(dataset: &Dataset, format: DataFormat, sink: W) -> Result<()> {
    match format {
        DataFormat::Csv => write_csv(dataset, sink),
        DataFormat::Json => write_json(dataset, sink),
    }
}

/// Which quantity a fit set carries in [`FitPoint::value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTarget {
    Qid,
    Loss16,
}

/// Record attributes a dataset can be partitioned by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupField {
    ModelId,
    Suite,
    QuantMethod,
    Bits,
}

impl GroupField {
    pub fn name(self) -> &'static str {
        match self {
            GroupField::ModelId => MODEL_ID,
            GroupField::Suite => "suite",
            GroupField::QuantMethod => "quant_method",
            GroupField::Bits => "bits",
        }
    }

    fn value_of(self, r: &MeasurementRecord) -> GroupValue {
        match self {
            GroupField::ModelId => GroupValue::Text(r.model_id.clone()),
            GroupField::Suite => GroupValue::Text(r.suite.clone()),
            GroupField::QuantMethod => GroupValue::Text(r.quant_method.clone()),
            GroupField::Bits => GroupValue::Number(r.bits),
        }
    }
}

impl FromStr for GroupField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "model_id" => Ok(GroupField::ModelId),
            "suite" => Ok(GroupField::Suite),
            "quant_method" => Ok(GroupField::QuantMethod),
            "bits" => Ok(GroupField::Bits),
            other => Err(Error::validation(
                "group_by",
                format!("unknown key `{other}` (expected model_id, suite, quant_method or bits)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupValue {
    Text(String),
    Number(f64),
}

impl Eq for GroupValue {}

impl PartialOrd for GroupValue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupValue {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (GroupValue::Text(a), GroupValue::Text(b)) => a.cmp(b),
            (GroupValue::Number(a), GroupValue::Number(b)) => a.total_cmp(b),
            (GroupValue::Text(_), GroupValue::Number(_)) => Ordering::Less,
            (GroupValue::Number(_), GroupValue::Text(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for GroupValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupValue::Text(s) => f.write_str(s),
            GroupValue::Number(x) => write!(f, "{x}"),
        }
    }
}

/// Tag tuple identifying one partition of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey(pub Vec<(GroupField, GroupValue)>);

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (field, value)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}={}", field.name(), value)?;
        }
        Ok(())
    }
}

/// One observation ready for fitting. `value` is the QiD or the 16-bit loss
/// depending on the fit set's target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    pub n: f64,
    pub d: f64,
    pub bits: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    /// 16-bit records anchor the QiD definition and carry no degradation.
    Baseline,
    /// QiD at or below the positivity floor cannot enter a log-space fit.
    BelowFloor,
    /// The checkpoint's 16-bit loss was already taken from an earlier record.
    DuplicateCheckpoint,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::Baseline => "baseline",
            ExclusionReason::BelowFloor => "qid at or below positivity floor",
            ExclusionReason::DuplicateCheckpoint => "duplicate checkpoint",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    /// Index of the record in the source dataset.
    pub record: usize,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSet {
    pub target: FitTarget,
    pub points: Vec<FitPoint>,
    pub group: Option<GroupKey>,
    pub excluded_count: usize,
    pub exclusions: Vec<Exclusion>,
}

impl FitSet {
    /// A fit set built directly from points, with nothing excluded.
    pub fn from_points(target: FitTarget, points: Vec<FitPoint>) -> Self {
        Self {
            target,
            points,
            group: None,
            excluded_count: 0,
            exclusions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Why the set has no usable points, or `None` if it has some.
    pub fn empty_reason(&self) -> Option<&'static str> {
        if !self.points.is_empty() {
            return None;
        }
        if !self.exclusions.is_empty()
            && self
                .exclusions
                .iter()
                .all(|e| e.reason == ExclusionReason::Baseline)
        {
            Some("baseline-only")
        } else {
            Some("all records excluded")
        }
    }
}

/// Splits a dataset into fit sets, one per group, in ascending key order.
///
/// For a QiD target, 16-bit records and records with `qid <= floor` are
/// excluded. For a 16-bit-loss target, each checkpoint (suite, model id,
/// size, tokens) contributes its `loss_16` once.
pub fn prepare_fit_points(
    dataset: &Dataset,
    target: FitTarget,
    positivity_floor: f64,
    group_by: &[GroupField],
) -> Result<Vec<FitSet>> {
    if target == FitTarget::Qid && !(positivity_floor.is_finite() && positivity_floor >= 0.0) {
        return Err(Error::validation(
            "positivity_floor",
            format!("must be finite and >= 0, got {positivity_floor}"),
        ));
    }

    let mut groups: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        let key = GroupKey(group_by.iter().map(|&f| (f, f.value_of(r))).collect());
        groups.entry(key).or_default().push(i);
    }

    let sets = groups
        .into_iter()
        .map(|(key, members)| {
            let mut set = FitSet::from_points(target, Vec::new());
            if !group_by.is_empty() {
                set.group = Some(key);
            }
            let mut seen: Vec<(&str, &str, u64, u64)> = Vec::new();
            for i in members {
                let r = &dataset.records[i];
                let reason = match target {
                    FitTarget::Qid if r.is_baseline() => Some(ExclusionReason::Baseline),
                    FitTarget::Qid if r.qid <= positivity_floor => {
                        Some(ExclusionReason::BelowFloor)
                    }
                    FitTarget::Qid => None,
                    FitTarget::Loss16 => {
                        let id = (r.suite.as_str(), r.model_id.as_str(), r.n_nonembed, r.tokens);
                        if seen.contains(&id) {
                            Some(ExclusionReason::DuplicateCheckpoint)
                        } else {
                            seen.push(id);
                            None
                        }
                    }
                };
                match reason {
                    Some(reason) => set.exclusions.push(Exclusion { record: i, reason }),
                    None => set.points.push(FitPoint {
                        n: r.n_nonembed as f64,
                        d: r.tokens as f64,
                        bits: r.bits,
                        value: match target {
                            FitTarget::Qid => r.qid,
                            FitTarget::Loss16 => r.loss_16,
                        },
                    }),
                }
            }
            set.excluded_count = set.exclusions.len();
            set
        })
        .collect();
    Ok(sets)
}
