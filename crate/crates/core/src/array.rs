//! The multi-precision container and its elementwise, reduction and shape
//! operations.
//!
//! Storage is column-major. Indices are 0-based. Values enter through `f64`
//! and are rounded to the array's precision on the way in; reading them back
//! widens exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dispatch::{plan, with_compute};
use crate::error::{Error, Result};
use crate::parallel;
use crate::precision::{decode_f16, encode_f16, Half16Bits, Precision};
use crate::scalar::Real;

/// Device tag. Only CPU arrays can run kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Placement {
    #[default]
    #[serde(rename = "CPU")]
    Cpu,
    #[serde(rename = "GPU")]
    Gpu,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Cpu => "CPU",
            Placement::Gpu => "GPU",
        })
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CPU" => Ok(Placement::Cpu),
            "GPU" => Ok(Placement::Gpu),
            other => Err(Error::InvalidParam(format!("unknown placement '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rows, cols)`, with a vector of length n viewed as n x 1.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Shape::Vector(n) => (n, 1),
            Shape::Matrix { rows, cols } => (rows, cols),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Half(Vec<Half16Bits>),
    Single(Vec<f32>),
    Double(Vec<f64>),
}

impl Storage {
    fn zeros(n: usize, p: Precision) -> Self {
        match p {
            Precision::Half => Storage::Half(vec![Half16Bits::ZERO; n]),
            Precision::Single => Storage::Single(vec![0.0; n]),
            Precision::Double => Storage::Double(vec![0.0; n]),
        }
    }

    fn from_f64s(values: impl Iterator<Item = f64>, p: Precision) -> Self {
        match p {
            Precision::Half => Storage::Half(values.map(encode_f16).collect()),
            Precision::Single => Storage::Single(values.map(|x| x as f32).collect()),
            Precision::Double => Storage::Double(values.collect()),
        }
    }

    fn len(&self) -> usize {
        match self {
            Storage::Half(v) => v.len(),
            Storage::Single(v) => v.len(),
            Storage::Double(v) => v.len(),
        }
    }

    fn precision(&self) -> Precision {
        match self {
            Storage::Half(_) => Precision::Half,
            Storage::Single(_) => Precision::Single,
            Storage::Double(_) => Precision::Double,
        }
    }

    fn get(&self, i: usize) -> f64 {
        match self {
            Storage::Half(v) => decode_f16(v[i]),
            Storage::Single(v) => v[i] as f64,
            Storage::Double(v) => v[i],
        }
    }

    fn set(&mut self, i: usize, x: f64) {
        match self {
            Storage::Half(v) => v[i] = encode_f16(x),
            Storage::Single(v) => v[i] = x as f32,
            Storage::Double(v) => v[i] = x,
        }
    }
}

/// Multi-precision vector or column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MPArray {
    shape: Shape,
    placement: Placement,
    storage: Storage,
}

impl MPArray {
    /// Zero vector of `size` elements.
    pub fn zeros(size: usize, precision: Precision, placement: Placement) -> Self {
        MPArray {
            shape: Shape::Vector(size),
            placement,
            storage: Storage::zeros(size, precision),
        }
    }

    pub fn zeros_matrix(rows: usize, cols: usize, precision: Precision) -> Self {
        MPArray {
            shape: Shape::Matrix { rows, cols },
            placement: Placement::Cpu,
            storage: Storage::zeros(rows * cols, precision),
        }
    }

    pub fn identity(n: usize, precision: Precision) -> Self {
        let mut a = MPArray::zeros_matrix(n, n, precision);
        for i in 0..n {
            a.storage.set(i * n + i, 1.0);
        }
        a
    }

    /// Matrix from column-major doubles, each rounded to `precision`.
    pub fn from_doubles(
        values: &[f64],
        rows: usize,
        cols: usize,
        precision: Precision,
        placement: Placement,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {rows} x {cols} matrix",
                values.len()
            )));
        }
        Ok(MPArray {
            shape: Shape::Matrix { rows, cols },
            placement,
            storage: Storage::from_f64s(values.iter().copied(), precision),
        })
    }

    /// CPU vector from doubles, each rounded to `precision`.
    pub fn from_vector(values: &[f64], precision: Precision) -> Self {
        MPArray {
            shape: Shape::Vector(values.len()),
            placement: Placement::Cpu,
            storage: Storage::from_f64s(values.iter().copied(), precision),
        }
    }

    /// Column-major values, widened exactly.
    pub fn to_doubles(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Half(v) => v.iter().map(|&h| decode_f16(h)).collect(),
            Storage::Single(v) => v.iter().map(|&x| x as f64).collect(),
            Storage::Double(v) => v.clone(),
        }
    }

    /// Raw binary16 patterns, for half arrays.
    pub fn half_bits(&self) -> Option<&[Half16Bits]> {
        match &self.storage {
            Storage::Half(v) => Some(v),
            _ => None,
        }
    }

    /// Same values in another precision (exact when widening).
    pub fn convert(&self, precision: Precision) -> MPArray {
        if precision == self.precision() {
            return self.clone();
        }
        MPArray {
            shape: self.shape,
            placement: self.placement,
            storage: Storage::from_f64s(self.to_doubles().into_iter(), precision),
        }
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    pub fn precision(&self) -> Precision {
        self.storage.precision()
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dims(&self) -> (usize, usize) {
        self.shape.dims()
    }

    pub fn rows(&self) -> usize {
        self.dims().0
    }

    pub fn cols(&self) -> usize {
        self.dims().1
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self.shape, Shape::Matrix { .. })
    }

    /// Reinterprets the buffer as a `rows x cols` matrix.
    pub fn to_matrix(&mut self, rows: usize, cols: usize) -> Result<()> {
        if rows * cols != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot view {} elements as {rows} x {cols}",
                self.len()
            )));
        }
        self.shape = Shape::Matrix { rows, cols };
        Ok(())
    }

    /// Reinterprets the buffer as a vector.
    pub fn to_vector(&mut self) {
        self.shape = Shape::Vector(self.len());
    }

    /// Linear (column-major) element access.
    pub fn get(&self, i: usize) -> Result<f64> {
        self.check_linear(i)?;
        Ok(self.storage.get(i))
    }

    pub fn get_at(&self, i: usize, j: usize) -> Result<f64> {
        let k = self.check_2d(i, j)?;
        Ok(self.storage.get(k))
    }

    /// Stores `v` rounded to the array's precision.
    pub fn set(&mut self, i: usize, v: f64) -> Result<()> {
        self.check_linear(i)?;
        self.storage.set(i, v);
        Ok(())
    }

    pub fn set_at(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let k = self.check_2d(i, j)?;
        self.storage.set(k, v);
        Ok(())
    }

    fn check_linear(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                extent: self.len(),
            });
        }
        Ok(())
    }

    fn check_2d(&self, i: usize, j: usize) -> Result<usize> {
        let (rows, cols) = self.dims();
        if i >= rows {
            return Err(Error::IndexOutOfRange {
                index: i,
                extent: rows,
            });
        }
        if j >= cols {
            return Err(Error::IndexOutOfRange {
                index: j,
                extent: cols,
            });
        }
        Ok(j * rows + i)
    }

    /// Widens the buffer to a compute type at least as wide as the storage.
    pub(crate) fn to_compute<T: Real>(&self) -> Vec<T> {
        debug_assert!(T::PRECISION >= self.precision().compute());
        match &self.storage {
            Storage::Half(v) => v.iter().map(|&h| T::from_f64(decode_f16(h))).collect(),
            Storage::Single(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            Storage::Double(v) => v.iter().map(|&x| T::from_f64(x)).collect(),
        }
    }

    /// Rounds compute results into storage of `precision`.
    pub(crate) fn from_compute<T: Real>(shape: Shape, precision: Precision, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        let storage = match precision {
            Precision::Half => Storage::Half(parallel::map_elements(&data, |&x| {
                encode_f16(Real::to_f64(x))
            })),
            Precision::Single => {
                Storage::Single(parallel::map_elements(&data, |&x| Real::to_f64(x) as f32))
            }
            Precision::Double => {
                Storage::Double(parallel::map_elements(&data, |&x| Real::to_f64(x)))
            }
        };
        MPArray {
            shape,
            placement: Placement::Cpu,
            storage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    fn scalar_name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add_scalar",
            BinaryOp::Sub => "sub_scalar",
            BinaryOp::Mul => "mul_scalar",
            BinaryOp::Div => "div_scalar",
        }
    }

    #[inline]
    fn apply<T: Real>(self, x: T, y: T) -> T {
        match self {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Log,
    Exp,
    Sqrt,
    Abs,
    /// Round to the given number of decimal digits, ties to even.
    Round(i32),
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Log => "log",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Round(_) => "round",
        }
    }

    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            UnaryOp::Log => x.ln(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Abs => x.abs(),
            UnaryOp::Round(digits) => {
                let scale = 10f64.powi(digits);
                T::from_f64((x.to_f64() * scale).round_ties_even() / scale)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    SquareSum,
    Min,
    Max,
    Mean,
}

impl ReduceOp {
    fn name(self) -> &'static str {
        match self {
            ReduceOp::Sum => "sum",
            ReduceOp::SquareSum => "square_sum",
            ReduceOp::Min => "min",
            ReduceOp::Max => "max",
            ReduceOp::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Elementwise `a op b`. Shapes must match, or one side has one element.
pub fn ew_binary(op: BinaryOp, a: &MPArray, b: &MPArray) -> Result<MPArray> {
    let entry = plan(op.name(), &[a, b])?;
    let same = a.len() == b.len() && (a.dims() == b.dims() || !a.is_matrix() || !b.is_matrix());
    let shape = if same || b.len() == 1 {
        a.shape
    } else if a.len() == 1 {
        b.shape
    } else {
        return Err(Error::ShapeMismatch(format!(
            "{:?} {} {:?}",
            a.dims(),
            op.name(),
            b.dims()
        )));
    };
    let n = shape.len();
    with_compute!(entry.compute, T => {
        let x = a.to_compute::<T>();
        let y = b.to_compute::<T>();
        let (sx, sy) = (x.len() == 1 && n != 1, y.len() == 1 && n != 1);
        let out = parallel::map_range(n, |i| {
            let xi = if sx { x[0] } else { x[i] };
            let yi = if sy { y[0] } else { y[i] };
            op.apply(xi, yi)
        });
        Ok(MPArray::from_compute(shape, entry.key.out, out))
    })
}

/// Elementwise `a op s`; the result keeps `a`'s precision.
pub fn ew_scalar(op: BinaryOp, a: &MPArray, s: f64) -> Result<MPArray> {
    let entry = plan(op.scalar_name(), &[a])?;
    with_compute!(entry.compute, T => {
        let x = a.to_compute::<T>();
        let s = T::from_f64(s);
        let out = parallel::map_elements(&x, |&xi| op.apply(xi, s));
        Ok(MPArray::from_compute(a.shape, entry.key.out, out))
    })
}

pub fn ew_unary(op: UnaryOp, a: &MPArray) -> Result<MPArray> {
    let entry = plan(op.name(), &[a])?;
    with_compute!(entry.compute, T => {
        let x = a.to_compute::<T>();
        let out = parallel::map_elements(&x, |&xi| op.apply(xi));
        Ok(MPArray::from_compute(a.shape, entry.key.out, out))
    })
}

/// Reduction accumulated in double, left to right in column-major order.
pub fn reduce(op: ReduceOp, a: &MPArray) -> Result<f64> {
    plan(op.name(), &[a])?;
    if a.is_empty() {
        return Err(Error::EmptyArray(op.name()));
    }
    let values = a.to_doubles();
    let v = match op {
        ReduceOp::Sum => values.iter().fold(0.0, |acc, &x| acc + x),
        ReduceOp::SquareSum => values.iter().fold(0.0, |acc, &x| acc + x * x),
        ReduceOp::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        ReduceOp::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ReduceOp::Mean => values.iter().fold(0.0, |acc, &x| acc + x) / values.len() as f64,
    };
    Ok(v)
}

pub fn sum(a: &MPArray) -> Result<f64> {
    reduce(ReduceOp::Sum, a)
}

pub fn square_sum(a: &MPArray) -> Result<f64> {
    reduce(ReduceOp::SquareSum, a)
}

/// Main diagonal of a matrix (first `min(rows, cols)` entries).
pub fn diag(a: &MPArray) -> Result<MPArray> {
    plan("diag", &[a])?;
    if !a.is_matrix() {
        return Err(Error::NotAMatrix("diag"));
    }
    let (rows, cols) = a.dims();
    let k = rows.min(cols);
    let values: Vec<f64> = (0..k).map(|i| a.storage.get(i * rows + i)).collect();
    Ok(MPArray {
        shape: Shape::Vector(k),
        placement: Placement::Cpu,
        storage: Storage::from_f64s(values.into_iter(), a.precision()),
    })
}

/// `n x n` matrix with `v` on the diagonal.
pub fn diag_from(v: &MPArray, n: usize) -> Result<MPArray> {
    plan("diag_from", &[v])?;
    if v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "diagonal of length {} for a {n} x {n} matrix",
            v.len()
        )));
    }
    let mut out = MPArray::zeros_matrix(n, n, v.precision());
    for i in 0..n {
        out.storage.set(i * n + i, v.storage.get(i));
    }
    Ok(out)
}

/// `rbind` (`Axis::Rows`) or `cbind` (`Axis::Cols`) in the promoted precision.
///
/// For `rbind` a vector counts as one row; for `cbind` as one column.
pub fn concat(axis: Axis, a: &MPArray, b: &MPArray) -> Result<MPArray> {
    let op = match axis {
        Axis::Rows => "rbind",
        Axis::Cols => "cbind",
    };
    let entry = plan(op, &[a, b])?;
    let view = |x: &MPArray| match (axis, x.shape) {
        (Axis::Rows, Shape::Vector(n)) => (1, n),
        _ => x.dims(),
    };
    let (ra, ca) = view(a);
    let (rb, cb) = view(b);
    let xa = a.to_doubles();
    let xb = b.to_doubles();
    let (rows, cols, values) = match axis {
        Axis::Cols => {
            if ra != rb && ca > 0 && cb > 0 {
                return Err(Error::ShapeMismatch(format!("cbind of {ra} and {rb} rows")));
            }
            let rows = if ca > 0 { ra } else { rb };
            let mut v = xa;
            v.extend_from_slice(&xb);
            (rows, ca + cb, v)
        }
        Axis::Rows => {
            if ca != cb && ra > 0 && rb > 0 {
                return Err(Error::ShapeMismatch(format!(
                    "rbind of {ca} and {cb} columns"
                )));
            }
            let cols = if ra > 0 { ca } else { cb };
            let rows = ra + rb;
            let mut v = Vec::with_capacity(rows * cols);
            for j in 0..cols {
                v.extend_from_slice(&xa[j * ra..(j + 1) * ra]);
                v.extend_from_slice(&xb[j * rb..(j + 1) * rb]);
            }
            (rows, cols, v)
        }
    };
    // Widening to the promoted precision is exact.
    MPArray::from_doubles(&values, rows, cols, entry.key.out, Placement::Cpu)
}

pub fn transpose(a: &MPArray) -> Result<MPArray> {
    plan("transpose", &[a])?;
    if !a.is_matrix() {
        return Err(Error::NotAMatrix("transpose"));
    }
    let (rows, cols) = a.dims();
    let x = a.to_doubles();
    let mut t = vec![0.0; x.len()];
    for j in 0..cols {
        for i in 0..rows {
            t[i * cols + j] = x[j * rows + i];
        }
    }
    MPArray::from_doubles(&t, cols, rows, a.precision(), Placement::Cpu)
}

/// Formats like R's `%g` with 7 significant digits.
pub(crate) fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.6e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..7).contains(&exp) {
        let decimals = (6 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

const RULE: &str = "---------------------";

impl fmt::Display for MPArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits = self.precision().bits();
        writeln!(f, "MPCR Object: {bits}-Bit Precision on {}", self.placement)?;
        let cells: Vec<String> = self.to_doubles().into_iter().map(format_number).collect();
        let widest = cells.iter().map(String::len).max().unwrap_or(1);
        match self.shape {
            Shape::Vector(n) => {
                writeln!(f, "Vector Size : {n}")?;
                writeln!(f, "{RULE}")?;
                let w = widest.max(6) + 1;
                for (line, chunk) in cells.chunks(10).enumerate() {
                    write!(f, "[ {} ] ", line * 10 + 1)?;
                    for c in chunk {
                        write!(f, "{c:>w$}")?;
                    }
                    writeln!(f)?;
                }
            }
            Shape::Matrix { rows, cols } => {
                writeln!(f, "Precision  : {bits}-Bit  Precision ")?;
                writeln!(f, "Number of Rows : {rows}")?;
                writeln!(f, "Number of Columns : {cols}")?;
                writeln!(f, "{RULE}")?;
                let w = widest + 4;
                for i in 0..rows {
                    write!(f, " [")?;
                    for j in 0..cols {
                        write!(f, "{:>w$}", cells[j * rows + i])?;
                    }
                    writeln!(f, "    ]")?;
                }
            }
        }
        Ok(())
    }
}

/// Printable form: header with precision and placement, dimensions, values.
pub fn format(a: &MPArray) -> String {
    a.to_string()
}
