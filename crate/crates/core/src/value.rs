//! Runtime values, object identities and ground variables.
//!
//! Everything that can appear in a partial world is keyed by [`GroundVar`]
//! and valued by [`Value`]. Both are totally ordered so that worlds can use
//! `BTreeMap`s throughout, which keeps every iteration order (and therefore
//! every seeded run) deterministic.

use std::cmp::Ordering;

/// Interned name of a declared type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId(pub u32);

/// Interned name of a random or origin function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FuncId(pub u32);

/// Interned guaranteed-object or evidence-set symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolId(pub u32);

/// Index of a number statement in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId(pub u32);

/// Identity of an object a world can talk about.
///
/// Generated objects are keyed by the number statement that created them,
/// the values bound to that statement's origin functions, and a 1-based
/// index. Worlds keep indices canonical: objects that carry content occupy
/// `1..=k` and the remaining `n - k` alive objects are interchangeable and
/// tracked only through the number variable's count.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObjectId {
    /// A `guaranteed` symbol of a declared type.
    Guaranteed { ty: TypeId, sym: SymbolId },
    /// A symbol introduced by set evidence; bound to a generated object
    /// through the world's labeling.
    Evidence { ty: TypeId, sym: SymbolId },
    /// A generated object: statement, origin-binding values, 1-based index.
    Generated {
        stmt: StmtId,
        binding: Vec<Value>,
        index: u32,
    },
}

impl ObjectId {
    pub fn is_generated(&self) -> bool {
        matches!(self, ObjectId::Generated { .. })
    }
}

/// A runtime value.
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Obj(ObjectId),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_object(&self) -> Option<&ObjectId> {
        match self {
            Value::Obj(o) => Some(o),
            _ => None,
        }
    }

    /// Numeric view used by arithmetic and distribution parameters.
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) => 2,
            Value::Real(_) => 3,
            Value::Obj(_) => 4,
        }
    }
}

// Values are keys in ordered maps; reals are compared by total order. NaN
// never enters a world (densities reject it at construction).
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Null, Value::Null) => Ordering::Equal,
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Real(a), Value::Real(b)) => a.total_cmp(b),
            (Value::Obj(a), Value::Obj(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

/// A ground random variable of the contingent network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroundVar {
    /// A random or origin function applied to concrete arguments.
    App { func: FuncId, args: Vec<Value> },
    /// A number variable: one instance of a number statement under a
    /// concrete origin binding.
    Num { stmt: StmtId, binding: Vec<Value> },
}

impl GroundVar {
    pub fn app(func: FuncId, args: Vec<Value>) -> Self {
        GroundVar::App { func, args }
    }

    pub fn num(stmt: StmtId, binding: Vec<Value>) -> Self {
        GroundVar::Num { stmt, binding }
    }

    pub fn is_number(&self) -> bool {
        matches!(self, GroundVar::Num { .. })
    }
}
