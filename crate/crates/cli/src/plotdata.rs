//! CSV plot tables extracted from a report bundle.
//!
//! Selectors are `kind[:key=value,...]`:
//!
//! | selector                       | columns                                       |
//! |--------------------------------|-----------------------------------------------|
//! | `shadow`                       | `re,im`                                       |
//! | `branches:face=N[,coord=J]`    | `sheet,re_z,im_z,re_f,im_f`                   |
//! | `atoms`                        | `multiplicity,cell,re_w1,im_w1,...`           |
//! | `convergence`                  | as tabulated by the op                        |
//!
//! `coord` is a 1-based ambient coordinate (default 2). Every kind also
//! accepts `op=K` to pick an op by its record index; otherwise the first op
//! whose result carries the table is used.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{CliError, Result};
use crate::run::ReportBundle;

const KINDS: &[&str] = &["shadow", "branches", "atoms", "convergence"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selector {
    pub kind: String,
    pub args: BTreeMap<String, usize>,
}

impl Selector {
    pub fn parse(text: &str) -> Result<Selector> {
        let bad = || CliError::Selector(text.to_string());
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        if !KINDS.contains(&kind) {
            return Err(bad());
        }
        let mut args = BTreeMap::new();
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            let allowed = match kind {
                "branches" => ["op", "face", "coord"].as_slice(),
                _ => ["op"].as_slice(),
            };
            if !allowed.contains(&k) {
                return Err(bad());
            }
            args.insert(k.to_string(), v.trim().parse().map_err(|_| bad())?);
        }
        if kind == "branches" && !args.contains_key("face") {
            return Err(bad());
        }
        Ok(Selector {
            kind: kind.to_string(),
            args,
        })
    }

    /// JSON key in an op result that holds this table.
    fn key(&self) -> &'static str {
        match self.kind.as_str() {
            "shadow" => "shadow",
            "branches" => "faces",
            "atoms" => "slice",
            _ => "convergence",
        }
    }
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn pair(v: &Value) -> (f64, f64) {
    (num(&v[0]), num(&v[1]))
}

fn write_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Renders the table named by `selector`. A selector that matches a result
/// with no rows yields the header alone.
pub fn emit_plotdata(bundle: &ReportBundle, selector: &str) -> Result<String> {
    let sel = Selector::parse(selector)?;
    let key = sel.key();
    let rec = match sel.args.get("op") {
        Some(&i) => bundle
            .ops
            .get(i)
            .filter(|r| r.result.get(key).is_some())
            .ok_or_else(|| CliError::Usage(format!("op {i} has no `{}` table", sel.kind)))?,
        None => bundle
            .ops
            .iter()
            .find(|r| r.result.get(key).is_some())
            .ok_or_else(|| CliError::Usage(format!("no op in the bundle has a `{}` table", sel.kind)))?,
    };
    let data = &rec.result[key];
    let empty = Vec::new();
    let (header, rows): (Vec<String>, Vec<Vec<String>>) = match sel.kind.as_str() {
        "shadow" => {
            let rows = data
                .as_array()
                .unwrap_or(&empty)
                .iter()
                .flat_map(|c| c["points"].as_array().unwrap_or(&empty).iter())
                .map(|p| {
                    let (re, im) = pair(p);
                    vec![fmt(re), fmt(im)]
                })
                .collect();
            (vec!["re".into(), "im".into()], rows)
        }
        "branches" => {
            let face = sel.args["face"];
            // 1-based ambient coordinate; z2 is the first graph coordinate
            let coord = sel.args.get("coord").copied().unwrap_or(2);
            if coord == 0 {
                return Err(CliError::Selector("coord is 1-based".into()));
            }
            let f = data
                .as_array()
                .and_then(|fs| fs.iter().find(|f| f["face"].as_u64() == Some(face as u64)))
                .ok_or_else(|| CliError::Usage(format!("no face {face} in op {}", rec.index)))?;
            let mut rows = Vec::new();
            let grid = f["grid"].as_array().unwrap_or(&empty);
            let branches = f["branches"].as_array().unwrap_or(&empty);
            for (z, per_sheet) in grid.iter().zip(branches) {
                let (zr, zi) = pair(z);
                for (h, coords) in per_sheet.as_array().unwrap_or(&empty).iter().enumerate() {
                    let Some(w) = coords.get(coord - 1) else {
                        return Err(CliError::Usage(format!("coordinate {coord} is beyond the truncation")));
                    };
                    let (wr, wi) = pair(w);
                    rows.push(vec![h.to_string(), fmt(zr), fmt(zi), fmt(wr), fmt(wi)]);
                }
            }
            let header = ["sheet", "re_z", "im_z", "re_f", "im_f"].map(String::from).to_vec();
            (header, rows)
        }
        "atoms" => {
            let atoms = data["atoms"].as_array().unwrap_or(&empty);
            let n = rec.result["ambient_dim"].as_u64().unwrap_or(0) as usize;
            let mut header = vec!["multiplicity".to_string(), "cell".to_string()];
            for j in 1..=n {
                header.push(format!("re_w{j}"));
                header.push(format!("im_w{j}"));
            }
            let rows = atoms
                .iter()
                .map(|a| {
                    let mut r = vec![a["multiplicity"].to_string(), a["cell"].to_string()];
                    for p in a["point"].as_array().unwrap_or(&empty) {
                        let (re, im) = pair(p);
                        r.push(fmt(re));
                        r.push(fmt(im));
                    }
                    r
                })
                .collect();
            (header, rows)
        }
        _ => {
            let header = data["columns"]
                .as_array()
                .unwrap_or(&empty)
                .iter()
                .map(|c| c.as_str().unwrap_or("").to_string())
                .collect();
            let rows = data["rows"]
                .as_array()
                .unwrap_or(&empty)
                .iter()
                .map(|r| r.as_array().unwrap_or(&empty).iter().map(|x| fmt(num(x))).collect())
                .collect();
            (header, rows)
        }
    };
    Ok(write_csv(&header, &rows))
}
