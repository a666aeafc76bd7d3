//! JSON interchange for rectifiable currents.
//!
//! ```json
//! {"ambient_dim": 2, "dim": 1,
//!  "cells": [{"k": 1, "multiplicity": 1, "param": ["(exp ...)", "..."]}]}
//! ```
//!
//! Each cell lists one prefix s-expression per ambient coordinate, in the
//! cube parameters `u1..uk` (and optionally ambient names `z1..zn`).

use metric_currents::hilbert::TailCertificate;
use metric_currents::{Cell, Expr, ExpressionMap, RectifiableCurrent};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDoc {
    pub k: usize,
    pub multiplicity: i64,
    pub param: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentDoc {
    pub ambient_dim: usize,
    pub dim: usize,
    pub cells: Vec<CellDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailCertificate>,
}

/// A current together with its declared truncation tail, if any.
#[derive(Clone, Debug)]
pub struct CurrentFile {
    pub current: RectifiableCurrent,
    pub tail: Option<TailCertificate>,
}

impl CurrentDoc {
    pub fn from_current(t: &RectifiableCurrent, tail: Option<&TailCertificate>) -> Self {
        CurrentDoc {
            ambient_dim: t.ambient.n,
            dim: t.dim,
            cells: t
                .cells
                .iter()
                .map(|c| CellDoc {
                    k: c.k,
                    multiplicity: c.multiplicity,
                    param: c.param.outputs().iter().map(Expr::to_sexpr).collect(),
                })
                .collect(),
            tail: tail.cloned(),
        }
    }

    pub fn to_current(&self) -> Result<CurrentFile> {
        let mut cells = Vec::with_capacity(self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            let at = |e: metric_currents::CurrentError| CliError::Format(format!("cells[{i}]: {e}"));
            let outputs = c
                .param
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    Expr::parse(s).map_err(|e| CliError::Format(format!("cells[{i}].param[{j}]: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let map = ExpressionMap::new(c.k, outputs).map_err(at)?;
            cells.push(Cell::new(map, c.multiplicity, 1).map_err(at)?);
        }
        let current = RectifiableCurrent::from_cells(self.ambient_dim, self.dim, cells)
            .map_err(|e| CliError::Format(e.to_string()))?;
        Ok(CurrentFile {
            current,
            tail: self.tail.clone(),
        })
    }
}

pub fn parse_current(text: &str) -> Result<CurrentFile> {
    let doc: CurrentDoc = serde_json::from_str(text)?;
    doc.to_current()
}

pub fn serialize_current(t: &RectifiableCurrent, tail: Option<&TailCertificate>) -> String {
    let mut s = serde_json::to_string_pretty(&CurrentDoc::from_current(t, tail))
        .expect("current documents always serialize");
    s.push('\n');
    s
}

pub fn read_current(path: &std::path::Path) -> Result<CurrentFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_current(&text).map_err(|e| e.context(path.display()))
}
