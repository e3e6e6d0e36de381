//! Versioned text model format.
//!
//! Line-oriented, human-auditable, with length-prefixed numeric arrays.
//! Floats serialize as their shortest round-trip decimal representation, so
//! a save/load cycle reproduces every value bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::arch::{ActivationSet, ArchKind, ArchitectureSpec, GateWeights, WeightSet};
use crate::dataset::NormParams;
use crate::error::{Error, Result};
use crate::hgen::Backend;
use crate::solver::RankFlag;
use crate::tensor::{Activation, DenseTensor};
use crate::trainer::{TimingBreakdown, TrainedModel};
use std::time::Duration;

const FORMAT_TAG: &str = "relm-model";
const FORMAT_VERSION: &str = "v1";

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(&path).map_err(|e| Error::MissingFile {
        path: path.as_ref().display().to_string(),
        reason: e.to_string(),
    })?;
    parse(&text)
}

fn render(model: &TrainedModel) -> Result<String> {
    let spec = &model.spec;
    let mut out = String::new();
    let w = writeln_helper;
    w(&mut out, format!("{FORMAT_TAG} {FORMAT_VERSION}"));
    w(&mut out, format!("arch {}", spec.kind.name()));
    w(
        &mut out,
        format!(
            "shape M {} Q {} S {} F {} R {}",
            spec.m, spec.q, spec.s, spec.f_len, spec.r_len
        ),
    );
    let a = &spec.activations;
    w(
        &mut out,
        format!(
            "activations g {} f {} o {} c {} lambda {} inp {} z {} r {}",
            a.g.name(),
            a.f.name(),
            a.o.name(),
            a.c.name(),
            a.lambda.name(),
            a.inp.name(),
            a.z.name(),
            a.r.name()
        ),
    );
    w(&mut out, format!("seed {}", model.seed));
    w(&mut out, format!("rng {}", model.rng_id));
    w(&mut out, format!("backend {}", model.backend.name()));
    w(&mut out, format!("block_size {}", model.block_size));
    let t = &model.timing;
    w(
        &mut out,
        format!(
            "timing_ns init {} transfer_in {} h_compute {} solve {} transfer_out {}",
            t.init.as_nanos(),
            t.transfer_in.as_nanos(),
            t.h_compute.as_nanos(),
            t.solve.as_nanos(),
            t.transfer_out.as_nanos()
        ),
    );
    w(
        &mut out,
        format!(
            "rank {}",
            match model.rank_flag {
                RankFlag::FullRank => "full_rank",
                RankFlag::Regularized => "regularized",
            }
        ),
    );
    w(&mut out, format!("ridge_lambda {}", model.ridge_lambda));
    match &model.norm {
        Some(n) => {
            write_array(&mut out, "norm_mean", &n.mean);
            write_array(&mut out, "norm_std", &n.std);
        }
        None => w(&mut out, "norm none".to_string()),
    }

    let ws = &model.weights;
    write_array(&mut out, "W", ws.w.data());
    write_array(&mut out, "b", ws.b.data());
    if let Some(alpha) = &ws.alpha {
        write_array(&mut out, "alpha", alpha.data());
    }
    if let Some(t) = &ws.w_out_fb {
        write_array(&mut out, "w_out_fb", t.data());
    }
    if let Some(t) = &ws.w_err_fb {
        write_array(&mut out, "w_err_fb", t.data());
    }
    if let Some(gates) = &ws.lstm {
        for (gi, gate) in gates.iter().enumerate() {
            write_array(&mut out, &format!("lstm{gi}_w"), gate.w.data());
            write_array(&mut out, &format!("lstm{gi}_u"), gate.u.data());
            write_array(&mut out, &format!("lstm{gi}_b"), gate.b.data());
        }
    }
    if let Some(gates) = &ws.gru {
        for (gi, gate) in gates.iter().enumerate() {
            write_array(&mut out, &format!("gru{gi}_w"), gate.w.data());
            write_array(&mut out, &format!("gru{gi}_u"), gate.u.data());
            write_array(&mut out, &format!("gru{gi}_b"), gate.b.data());
        }
    }
    write_array(&mut out, "beta", &ws.beta);
    w(&mut out, "end".to_string());
    Ok(out)
}

fn writeln_helper(out: &mut String, line: String) {
    let _ = writeln!(out, "{line}");
}

fn write_array(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "array {name} {}", values.len());
    for v in values {
        let _ = writeln!(out, "{v}");
    }
}

struct Parser<'a> {
    lines: std::iter::Peekable<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().peekable(),
            line_no: 0,
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::CorruptModel(format!("unexpected end of file at line {}", self.line_no)))
    }

    fn expect_keyword(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            other => Err(Error::CorruptModel(format!(
                "line {}: expected {key:?}, found {other:?}",
                self.line_no
            ))),
        }
    }

    fn read_array(&mut self, name: &str) -> Result<Vec<f64>> {
        let parts = self.expect_keyword("array")?;
        if parts.len() != 2 || parts[0] != name {
            return Err(Error::CorruptModel(format!(
                "line {}: expected array {name}, found {parts:?}",
                self.line_no
            )));
        }
        let len: usize = parts[1]
            .parse()
            .map_err(|_| Error::CorruptModel(format!("line {}: bad array length", self.line_no)))?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let line = self.next_line()?;
            let v: f64 = line.trim().parse().map_err(|_| {
                Error::CorruptModel(format!("line {}: bad float {line:?}", self.line_no))
            })?;
            values.push(v);
        }
        Ok(values)
    }
}

fn parse_kv<T: std::str::FromStr>(parts: &[&str], key: &str, line_no: usize) -> Result<T> {
    let pos = parts
        .iter()
        .position(|p| *p == key)
        .ok_or_else(|| Error::CorruptModel(format!("line {line_no}: missing field {key}")))?;
    parts
        .get(pos + 1)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::CorruptModel(format!("line {line_no}: bad value for {key}")))
}

fn parse(text: &str) -> Result<TrainedModel> {
    let mut p = Parser::new(text);
    let header = p.next_line()?;
    let mut head = header.split_whitespace();
    match (head.next(), head.next()) {
        (Some(FORMAT_TAG), Some(FORMAT_VERSION)) => {}
        (Some(FORMAT_TAG), Some(other)) => {
            return Err(Error::ModelVersion(other.to_string()));
        }
        _ => {
            return Err(Error::CorruptModel("not a model file".into()));
        }
    }

    let arch_parts = p.expect_keyword("arch")?;
    let kind = ArchKind::parse(
        arch_parts
            .first()
            .ok_or_else(|| Error::CorruptModel("missing arch kind".into()))?,
    )?;
    let shape = p.expect_keyword("shape")?;
    let m: usize = parse_kv(&shape, "M", p.line_no)?;
    let q: usize = parse_kv(&shape, "Q", p.line_no)?;
    let s: usize = parse_kv(&shape, "S", p.line_no)?;
    let f_len: usize = parse_kv(&shape, "F", p.line_no)?;
    let r_len: usize = parse_kv(&shape, "R", p.line_no)?;

    let acts = p.expect_keyword("activations")?;
    let act = |key: &str| -> Result<Activation> {
        let s: String = parse_kv(&acts, key, 0)?;
        Activation::parse(&s)
    };
    let activations = ActivationSet {
        g: act("g")?,
        f: act("f")?,
        o: act("o")?,
        c: act("c")?,
        lambda: act("lambda")?,
        inp: act("inp")?,
        z: act("z")?,
        r: act("r")?,
    };

    let seed: u64 = p
        .expect_keyword("seed")?
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::CorruptModel("bad seed".into()))?;

    let rng_id = p
        .expect_keyword("rng")?
        .first()
        .map(|s| s.to_string())
        .ok_or_else(|| Error::CorruptModel("missing rng id".into()))?;
    let backend = Backend::parse(
        p.expect_keyword("backend")?
            .first()
            .ok_or_else(|| Error::CorruptModel("missing backend".into()))?,
    )?;
    let block_size: usize = p
        .expect_keyword("block_size")?
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::CorruptModel("bad block size".into()))?;

    let timing_parts = p.expect_keyword("timing_ns")?;
    let dur = |key: &str| -> Result<Duration> {
        let ns: u64 = parse_kv(&timing_parts, key, 0)?;
        Ok(Duration::from_nanos(ns))
    };
    let timing = TimingBreakdown {
        init: dur("init")?,
        transfer_in: dur("transfer_in")?,
        h_compute: dur("h_compute")?,
        solve: dur("solve")?,
        transfer_out: dur("transfer_out")?,
    };

    let rank_flag = match p.expect_keyword("rank")?.first() {
        Some(&"full_rank") => RankFlag::FullRank,
        Some(&"regularized") => RankFlag::Regularized,
        other => {
            return Err(Error::CorruptModel(format!("bad rank flag {other:?}")));
        }
    };
    let ridge_lambda: f64 = p
        .expect_keyword("ridge_lambda")?
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::CorruptModel("bad ridge term".into()))?;

    // Norm params or "norm none".
    let norm = {
        let peek = p
            .lines
            .peek()
            .copied()
            .ok_or_else(|| Error::CorruptModel("unexpected end before norm".into()))?;
        if peek.starts_with("norm none") {
            p.next_line()?;
            None
        } else {
            let mean = p.read_array("norm_mean")?;
            let std = p.read_array("norm_std")?;
            Some(NormParams { mean, std })
        }
    };

    let mut spec = ArchitectureSpec::new(kind, m, q, s)?;
    spec.f_len = f_len;
    spec.r_len = r_len;
    spec.activations = activations;

    let w = DenseTensor::from_vec(&[s, m], p.read_array("W")?)?;
    let b = DenseTensor::from_vec(&[m], p.read_array("b")?)?;
    let mut weights = WeightSet {
        w,
        b,
        alpha: None,
        w_out_fb: None,
        w_err_fb: None,
        lstm: None,
        gru: None,
        beta: Vec::new(),
    };
    match kind {
        ArchKind::Elman | ArchKind::Jordan => {
            weights.alpha = Some(DenseTensor::from_vec(&[m, q], p.read_array("alpha")?)?);
        }
        ArchKind::FullyConnected => {
            weights.alpha = Some(DenseTensor::from_vec(&[m, m, q], p.read_array("alpha")?)?);
        }
        ArchKind::Narmax => {
            if f_len > 0 {
                weights.w_out_fb =
                    Some(DenseTensor::from_vec(&[m, f_len], p.read_array("w_out_fb")?)?);
            }
            if r_len > 0 {
                weights.w_err_fb =
                    Some(DenseTensor::from_vec(&[m, r_len], p.read_array("w_err_fb")?)?);
            }
        }
        ArchKind::Lstm => {
            let mut gates = Vec::with_capacity(4);
            for gi in 0..4 {
                gates.push(GateWeights {
                    w: DenseTensor::from_vec(&[s, m], p.read_array(&format!("lstm{gi}_w"))?)?,
                    u: DenseTensor::from_vec(&[m], p.read_array(&format!("lstm{gi}_u"))?)?,
                    b: DenseTensor::from_vec(&[m], p.read_array(&format!("lstm{gi}_b"))?)?,
                });
            }
            weights.lstm = Some(gates.try_into().expect("4 gates"));
        }
        ArchKind::Gru => {
            let mut gates = Vec::with_capacity(3);
            for gi in 0..3 {
                gates.push(GateWeights {
                    w: DenseTensor::from_vec(&[s, m], p.read_array(&format!("gru{gi}_w"))?)?,
                    u: DenseTensor::from_vec(&[m], p.read_array(&format!("gru{gi}_u"))?)?,
                    b: DenseTensor::from_vec(&[m], p.read_array(&format!("gru{gi}_b"))?)?,
                });
            }
            weights.gru = Some(gates.try_into().expect("3 gates"));
        }
    }
    weights.beta = p.read_array("beta")?;
    if weights.beta.len() != m {
        return Err(Error::CorruptModel(format!(
            "readout has {} entries for M={}",
            weights.beta.len(),
            m
        )));
    }
    p.expect_keyword("end")?;

    Ok(TrainedModel {
        spec,
        weights,
        norm,
        seed,
        rng_id,
        backend,
        block_size,
        timing,
        rank_flag,
        ridge_lambda,
    })
}
