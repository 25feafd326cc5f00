use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use rbstc::analysis::RegionReport;
use rbstc::numkit::{eig, Tolerances};
use rbstc::periodic::PatternReport;
use rbstc::regions::{ConicRegion, TauBounds};
use rbstc::system::{A1Report, HurwitzCheck, LinearSystem};

use crate::config::rows;

/// Pretty JSON with every float written with 17 significant digits.
struct FixedFloats<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize infallibly");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[derive(Serialize)]
pub struct SystemReport {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub open_loop_eigenvalues: Vec<[f64; 2]>,
    pub closed_loop_eigenvalues: Vec<[f64; 2]>,
    pub hurwitz: Option<HurwitzCheck>,
}

fn eigenvalues(m: &rbstc::numkit::Matrix, tol: &Tolerances) -> Vec<[f64; 2]> {
    match eig(m, tol) {
        Ok(spec) => spec.pairs.iter().flat_map(|p| std::iter::repeat_n([p.value.re, p.value.im], p.algebraic)).collect(),
        Err(_) => vec![],
    }
}

impl SystemReport {
    pub fn new(sys: &LinearSystem, tol: &Tolerances) -> Self {
        SystemReport {
            a: rows(sys.a()),
            b: rows(sys.b()),
            k: rows(sys.k()),
            open_loop_eigenvalues: eigenvalues(sys.a(), tol),
            closed_loop_eigenvalues: eigenvalues(&sys.closed_loop(), tol),
            hurwitz: sys.hurwitz_check(tol).ok(),
        }
    }
}

#[derive(Serialize)]
pub struct TriggerReport {
    pub kind: &'static str,
    pub sigma: f64,
    pub horizon: f64,
    pub bounds: Option<TauBounds>,
}

#[derive(Serialize)]
pub struct PartitionReport<'a> {
    pub mode: &'static str,
    pub dimension: usize,
    pub regions: &'a [ConicRegion],
}

#[derive(Serialize)]
pub struct AnalysisReport<'a> {
    pub format: &'static str,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub system: SystemReport,
    pub trigger: Option<TriggerReport>,
    pub partition: PartitionReport<'a>,
    pub assumption_a1: A1Report,
    pub regions: Vec<RegionReport>,
    pub periodic: Option<Vec<PatternReport>>,
}

pub const FORMAT: &str = "rbstc-analysis-report/1";
