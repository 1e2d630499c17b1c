//! Precision controller and kernel dispatcher.
//!
//! Every public operation resolves a [`KernelKey`] from its input precisions
//! before it runs. The output precision is always the lattice join of the
//! inputs. Mixed signatures are served by widening each operand exactly to the
//! output precision and running the homogeneous kernel for that precision;
//! half-precision outputs are computed in single and rounded back.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use crate::array::{self, BinaryOp, MPArray, Placement, UnaryOp};
use crate::error::{Error, Result};
use crate::linalg;
use crate::precision::{promote, Precision};

/// Resolved `(input, input, output)` precision signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelKey {
    pub in_a: Precision,
    pub in_b: Option<Precision>,
    pub out: Precision,
}

impl KernelKey {
    pub fn unary(a: Precision) -> Self {
        KernelKey {
            in_a: a,
            in_b: None,
            out: a,
        }
    }

    pub fn binary(a: Precision, b: Precision) -> Self {
        KernelKey {
            in_a: a,
            in_b: Some(b),
            out: promote(a, b),
        }
    }
}

impl fmt::Display for KernelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.in_b {
            Some(b) => write!(f, "({}, {}) -> {}", self.in_a, b, self.out),
            None => write!(f, "({}) -> {}", self.in_a, self.out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Unary,
    Binary,
}

/// Registered kernel variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelEntry {
    pub op: &'static str,
    pub key: KernelKey,
    /// Precision the arithmetic runs in.
    pub compute: Precision,
}

const BINARY_OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "div",
    "rbind",
    "cbind",
    "matmul",
    "crossprod",
    "gemm",
    "forwardsolve",
    "backsolve",
    "trsm",
    "solve",
];

const UNARY_OPS: &[&str] = &[
    "add_scalar",
    "sub_scalar",
    "mul_scalar",
    "div_scalar",
    "log",
    "exp",
    "sqrt",
    "abs",
    "round",
    "sum",
    "square_sum",
    "min",
    "max",
    "mean",
    "diag",
    "diag_from",
    "transpose",
    "chol",
    "chol2inv",
    "inverse",
    "svd",
];

/// Reductions always accumulate in double regardless of storage.
const DOUBLE_ACCUMULATE: &[&str] = &["sum", "square_sum", "min", "max", "mean"];

pub struct KernelRegistry {
    arity: HashMap<&'static str, Arity>,
    table: HashMap<(&'static str, KernelKey), KernelEntry>,
}

impl KernelRegistry {
    fn build() -> Self {
        let mut arity = HashMap::new();
        let mut table = HashMap::new();
        let mut insert = |op: &'static str, key: KernelKey| {
            let compute = if DOUBLE_ACCUMULATE.contains(&op) {
                Precision::Double
            } else {
                key.out.compute()
            };
            table.insert((op, key), KernelEntry { op, key, compute });
        };
        for &op in BINARY_OPS {
            arity.insert(op, Arity::Binary);
            for a in Precision::ALL {
                for b in Precision::ALL {
                    insert(op, KernelKey::binary(a, b));
                }
            }
        }
        for &op in UNARY_OPS {
            arity.insert(op, Arity::Unary);
            for a in Precision::ALL {
                insert(op, KernelKey::unary(a));
            }
        }
        KernelRegistry { arity, table }
    }

    pub fn arity(&self, op: &str) -> Option<Arity> {
        self.arity.get(op).copied()
    }

    /// Registered operation names, sorted.
    pub fn operations(&self) -> Vec<&'static str> {
        let mut ops: Vec<_> = self.arity.keys().copied().collect();
        ops.sort_unstable();
        ops
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Picks the signature for `op` given its input precisions.
    pub fn resolve(&self, op: &str, a: Precision, b: Option<Precision>) -> Result<KernelKey> {
        let arity = self
            .arity(op)
            .ok_or_else(|| Error::UnknownOperation(op.to_string()))?;
        let key = match (arity, b) {
            (Arity::Binary, Some(b)) => KernelKey::binary(a, b),
            (Arity::Unary, None) => KernelKey::unary(a),
            _ => {
                return Err(Error::UnknownKernel {
                    op: op.to_string(),
                    signature: format!("({a}, {b:?})"),
                })
            }
        };
        Ok(key)
    }

    pub fn lookup(&self, op: &str, key: &KernelKey) -> Result<&KernelEntry> {
        if self.arity(op).is_none() {
            return Err(Error::UnknownOperation(op.to_string()));
        }
        // The table is keyed by &'static str; find the interned name first.
        let name = self.arity.get_key_value(op).map(|(k, _)| *k).unwrap();
        self.table
            .get(&(name, *key))
            .ok_or_else(|| Error::UnknownKernel {
                op: op.to_string(),
                signature: key.to_string(),
            })
    }
}

/// Process-wide registry, built on first use and immutable afterwards.
pub fn registry() -> &'static KernelRegistry {
    static REGISTRY: OnceLock<KernelRegistry> = OnceLock::new();
    REGISTRY.get_or_init(KernelRegistry::build)
}

/// Resolves `op` for `inputs` and checks they can execute here.
pub(crate) fn plan(op: &str, inputs: &[&MPArray]) -> Result<KernelEntry> {
    let reg = registry();
    let a = inputs
        .first()
        .ok_or_else(|| Error::InvalidParam(format!("'{op}' needs at least one input")))?;
    let key = reg.resolve(op, a.precision(), inputs.get(1).map(|b| b.precision()))?;
    check_placement(op, inputs)?;
    reg.lookup(op, &key).copied()
}

pub(crate) fn check_placement(op: &str, inputs: &[&MPArray]) -> Result<()> {
    if inputs.iter().any(|x| x.placement() == Placement::Gpu) {
        return Err(Error::BackendUnavailable(format!(
            "'{op}' was called on a GPU-placed array; only the CPU backend is built"
        )));
    }
    Ok(())
}

/// Runs a single-output operation under an explicit signature.
///
/// Inputs must carry exactly the precisions named by `key`. Operations that
/// take extra parameters run with their defaults (`round` to 0 digits);
/// `gemm`, `trsm` and `svd` have no single-output form and are rejected.
pub fn execute(key: &KernelKey, op: &str, inputs: &[&MPArray]) -> Result<MPArray> {
    let reg = registry();
    reg.lookup(op, key)?;
    let expected: Vec<Precision> = std::iter::once(key.in_a).chain(key.in_b).collect();
    if inputs.len() != expected.len() {
        return Err(Error::InvalidParam(format!(
            "'{op}' expects {} inputs, got {}",
            expected.len(),
            inputs.len()
        )));
    }
    for (x, &p) in inputs.iter().zip(&expected) {
        if x.precision() != p {
            return Err(Error::SignatureMismatch {
                expected: p,
                found: x.precision(),
            });
        }
    }
    check_placement(op, inputs)?;

    let a = inputs[0];
    let b = || inputs[1];
    let out = match op {
        "add" => array::ew_binary(BinaryOp::Add, a, b())?,
        "sub" => array::ew_binary(BinaryOp::Sub, a, b())?,
        "mul" => array::ew_binary(BinaryOp::Mul, a, b())?,
        "div" => array::ew_binary(BinaryOp::Div, a, b())?,
        "rbind" => array::concat(array::Axis::Rows, a, b())?,
        "cbind" => array::concat(array::Axis::Cols, a, b())?,
        "matmul" => linalg::matmul(a, b())?,
        "crossprod" => linalg::crossprod(a, Some(b()))?,
        "forwardsolve" => linalg::forwardsolve(a, b())?,
        "backsolve" => linalg::backsolve(a, b())?,
        "solve" => linalg::solve(a, Some(b()))?,
        "log" => array::ew_unary(UnaryOp::Log, a)?,
        "exp" => array::ew_unary(UnaryOp::Exp, a)?,
        "sqrt" => array::ew_unary(UnaryOp::Sqrt, a)?,
        "abs" => array::ew_unary(UnaryOp::Abs, a)?,
        "round" => array::ew_unary(UnaryOp::Round(0), a)?,
        "diag" => array::diag(a)?,
        "transpose" => array::transpose(a)?,
        "chol" => linalg::chol(a)?,
        "chol2inv" => linalg::chol2inv(a)?,
        "inverse" => linalg::solve(a, None)?,
        _ => {
            return Err(Error::InvalidParam(format!(
                "'{op}' has no single-output form; call it directly"
            )))
        }
    };
    debug_assert_eq!(out.precision(), key.out);
    Ok(out)
}

/// Binds the compute scalar type for a resolved kernel.
macro_rules! with_compute {
    ($compute:expr, $t:ident => $body:expr) => {
        match $compute {
            $crate::precision::Precision::Double => {
                type $t = f64;
                $body
            }
            _ => {
                type $t = f32;
                $body
            }
        }
    };
}
pub(crate) use with_compute;
