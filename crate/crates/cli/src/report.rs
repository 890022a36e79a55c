use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, RunConfig};

/// Rounds to 9 significant digits.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Rounds every float in `v`; integers are left alone. Non-finite values
/// are already `null` by the time they reach a `Value`.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            serde_json::Number::from_f64(sig9(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

pub fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

/// Pretty JSON with every number rounded except the raw embedded config.
pub fn json_document(command: &str, body: Map<String, Value>, cfg: &RunConfig) -> String {
    let mut doc = match round_floats(Value::Object(body)) {
        Value::Object(o) => o,
        _ => unreachable!(),
    };
    doc.insert("command".into(), Value::String(command.into()));
    doc.insert("config".into(), to_value(cfg));
    let mut s = serde_json::to_string_pretty(&Value::Object(doc)).expect("json");
    s.push('\n');
    s
}

/// CSV cell for a float: 9 significant digits, empty when missing.
pub fn cell(x: Option<f64>) -> String {
    match x {
        Some(x) if x.is_finite() => serde_json::to_string(&sig9(x)).expect("finite"),
        Some(x) if x.is_nan() => "nan".into(),
        Some(x) if x > 0.0 => "inf".into(),
        Some(_) => "-inf".into(),
        None => String::new(),
    }
}

pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub struct CsvDoc {
    w: csv::Writer<Vec<u8>>,
    width: usize,
}

impl CsvDoc {
    pub fn new(header: &[&str]) -> Result<Self, CliError> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        w.write_record(header).map_err(run)?;
        Ok(Self { w, width: header.len() })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<(), CliError> {
        debug_assert_eq!(cells.len(), self.width);
        self.w.write_record(cells).map_err(run)
    }

    /// Record whose first field starts with `#`, read as a footer.
    pub fn footer(&mut self, cells: &[String]) -> Result<(), CliError> {
        self.w.write_record(cells).map_err(run)
    }

    pub fn finish(mut self, cfg: &RunConfig) -> Result<String, CliError> {
        let config = serde_json::to_string(cfg).expect("json");
        self.w.write_record(["#config", config.as_str()]).map_err(run)?;
        let bytes = self.w.into_inner().map_err(|e| CliError::Run(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Run(e.to_string()))
    }
}

fn run(e: csv::Error) -> CliError {
    CliError::Run(e.to_string())
}

/// Monotonicity label for a column, ignoring missing values.
pub fn trend(xs: &[Option<f64>]) -> &'static str {
    let v: Vec<f64> = xs.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 2 {
        return "n/a";
    }
    let up = v.windows(2).all(|w| w[1] > w[0]);
    let down = v.windows(2).all(|w| w[1] < w[0]);
    let flat = v.windows(2).all(|w| w[1] == w[0]);
    let nondec = v.windows(2).all(|w| w[1] >= w[0]);
    let noninc = v.windows(2).all(|w| w[1] <= w[0]);
    match (up, down, flat, nondec, noninc) {
        (true, ..) => "strictly_increasing",
        (_, true, ..) => "strictly_decreasing",
        (_, _, true, ..) => "constant",
        (.., true, _) => "nondecreasing",
        (.., true) => "nonincreasing",
        _ => "mixed",
    }
}
