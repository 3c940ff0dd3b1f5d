//! In-memory execution of the subset and result comparison.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ast::{AggFunc, BinaryOp, Query};
use super::bind::{bind, BExpr, Bound, OrderKey};
use super::value::Canon;
use super::{parse_sql, SqlError, Value};
use crate::ident::Ident;
use crate::schema::Schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableData {
    pub name: Ident,
    pub rows: Vec<Vec<Value>>,
}

/// A schema together with row data for each of its tables.
#[derive(Debug, Clone)]
pub struct Database {
    schema: Schema,
    // aligned with `schema.tables`
    rows: Vec<Vec<Vec<Value>>>,
}

impl Database {
    /// Tables without data are empty. Data for unknown tables or rows of
    /// the wrong width are rejected.
    pub fn new(schema: Schema, tables: Vec<TableData>) -> Result<Self, SqlError> {
        let mut rows: Vec<Option<Vec<Vec<Value>>>> = schema.tables.iter().map(|_| None).collect();
        for data in tables {
            let i = schema
                .tables
                .iter()
                .position(|t| t.name == data.name)
                .ok_or_else(|| SqlError::InvalidDatabase(alloc::format!("no table `{}` in schema", data.name)))?;
            if rows[i].is_some() {
                return Err(SqlError::InvalidDatabase(alloc::format!("table `{}` given twice", data.name)));
            }
            let width = schema.tables[i].columns.len();
            if let Some(n) = data.rows.iter().position(|r| r.len() != width) {
                return Err(SqlError::InvalidDatabase(alloc::format!(
                    "table `{}` row {n} has {} values, expected {width}",
                    data.name,
                    data.rows[n].len()
                )));
            }
            rows[i] = Some(data.rows);
        }
        Ok(Database { schema, rows: rows.into_iter().map(Option::unwrap_or_default).collect() })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self, table: &str) -> Option<&[Vec<Value>]> {
        let i = self.schema.tables.iter().position(|t| t.name == *table)?;
        Some(&self.rows[i])
    }
}

/// Rows produced by a query. `ordered` is set when the query had ORDER BY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub arity: usize,
    pub rows: Vec<Vec<Value>>,
    pub ordered: bool,
}

pub fn execute(query: &Query, db: &Database) -> Result<ResultTable, SqlError> {
    let mut bound = bind(query, &db.schema)?;
    run(&mut bound, db)
}

/// Execution equivalence: same arity and the same multiset of rows under
/// canonical value equality. Row order matters only when both sides are
/// ordered.
pub fn results_equal(a: &ResultTable, b: &ResultTable) -> bool {
    if a.arity != b.arity || a.rows.len() != b.rows.len() {
        return false;
    }
    let canon = |t: &ResultTable| -> Vec<Vec<Canon>> {
        t.rows.iter().map(|r| r.iter().map(Value::canonical).collect()).collect()
    };
    let (mut x, mut y) = (canon(a), canon(b));
    if !(a.ordered && b.ordered) {
        x.sort();
        y.sort();
    }
    x == y
}

/// True when some candidate produces the gold query's result. Candidates
/// that fail to parse or execute count as non-matching; a failing gold
/// query is an error.
pub fn execution_match<S: AsRef<str>>(candidates: &[S], gold_sql: &str, db: &Database) -> Result<bool, SqlError> {
    let gold = parse_sql(gold_sql)
        .and_then(|q| execute(&q, db))
        .map_err(|e| SqlError::GoldQueryInvalid(e.to_string()))?;
    Ok(candidates.iter().any(|c| {
        parse_sql(c.as_ref())
            .and_then(|q| execute(&q, db))
            .is_ok_and(|res| results_equal(&res, &gold))
    }))
}

fn run(b: &mut Bound, db: &Database) -> Result<ResultTable, SqlError> {
    materialize_bound(b, db)?;

    let mut rows: Vec<Vec<Value>> = db.rows[b.sources[0].table_index].clone();
    for (src, on) in b.sources[1..].iter().zip(&b.join_on) {
        let right = &db.rows[src.table_index];
        let mut next = Vec::new();
        for l in &rows {
            for r in right {
                let mut joined = l.clone();
                joined.extend(r.iter().cloned());
                if eval(on, Ctx::Row(&joined))?.truthy()? {
                    next.push(joined);
                }
            }
        }
        rows = next;
    }
    if let Some(f) = &b.filter {
        let mut kept = Vec::with_capacity(rows.len());
        for r in rows {
            if eval(f, Ctx::Row(&r))?.truthy()? {
                kept.push(r);
            }
        }
        rows = kept;
    }

    // (output row, sort keys)
    let mut out: Vec<(Vec<Value>, Vec<Value>)> = Vec::new();
    let project = |ctx: Ctx<'_>, out: &mut Vec<(Vec<Value>, Vec<Value>)>| -> Result<(), SqlError> {
        let row = b.projection.iter().map(|e| eval(e, ctx)).collect::<Result<Vec<_>, _>>()?;
        let mut keys = Vec::with_capacity(b.order_by.len());
        for (k, _) in &b.order_by {
            keys.push(match k {
                OrderKey::Output(i) => row[*i].clone(),
                OrderKey::Expr(e) => eval(e, ctx)?,
            });
        }
        out.push((row, keys));
        Ok(())
    };
    if b.grouped {
        let mut order: Vec<Vec<&[Value]>> = Vec::new();
        let mut index: BTreeMap<Vec<Canon>, usize> = BTreeMap::new();
        if b.group_by.is_empty() {
            order.push(rows.iter().map(Vec::as_slice).collect());
        } else {
            for r in &rows {
                let key = b
                    .group_by
                    .iter()
                    .map(|e| eval(e, Ctx::Row(r)).map(|v| v.canonical()))
                    .collect::<Result<Vec<_>, _>>()?;
                let slot = *index.entry(key).or_insert_with(|| {
                    order.push(Vec::new());
                    order.len() - 1
                });
                order[slot].push(r);
            }
        }
        for group in &order {
            if let Some(h) = &b.having {
                if !eval(h, Ctx::Group(group))?.truthy()? {
                    continue;
                }
            }
            project(Ctx::Group(group), &mut out)?;
        }
    } else {
        for r in &rows {
            project(Ctx::Row(r), &mut out)?;
        }
    }

    if b.distinct {
        let mut seen = alloc::collections::BTreeSet::new();
        out.retain(|(row, _)| seen.insert(row.iter().map(Value::canonical).collect::<Vec<_>>()));
    }
    if !b.order_by.is_empty() {
        let desc: Vec<bool> = b.order_by.iter().map(|(_, d)| *d).collect();
        out.sort_by(|(_, x), (_, y)| {
            for ((a, b), d) in x.iter().zip(y).zip(&desc) {
                let o = a.sort_cmp(b);
                if o != Ordering::Equal {
                    return if *d { o.reverse() } else { o };
                }
            }
            Ordering::Equal
        });
    }
    if let Some(n) = b.limit {
        out.truncate(usize::try_from(n).unwrap_or(usize::MAX));
    }
    Ok(ResultTable {
        arity: b.projection.len(),
        rows: out.into_iter().map(|(r, _)| r).collect(),
        ordered: !b.order_by.is_empty(),
    })
}

fn materialize_bound(b: &mut Bound, db: &Database) -> Result<(), SqlError> {
    for e in b
        .projection
        .iter_mut()
        .chain(b.join_on.iter_mut())
        .chain(b.filter.iter_mut())
        .chain(b.group_by.iter_mut())
        .chain(b.having.iter_mut())
    {
        materialize(e, db)?;
    }
    for (k, _) in &mut b.order_by {
        if let OrderKey::Expr(e) = k {
            materialize(e, db)?;
        }
    }
    Ok(())
}

/// Replaces each uncorrelated subquery with its result column.
fn materialize(e: &mut BExpr, db: &Database) -> Result<(), SqlError> {
    match e {
        BExpr::InSubquery(inner, sub, negated) => {
            materialize(inner, db)?;
            let res = run(sub, db)?;
            let values = res.rows.into_iter().filter_map(|mut r| r.pop()).collect();
            let inner = core::mem::replace(inner, Box::new(BExpr::Literal(Value::Null)));
            *e = BExpr::InValues(inner, values, *negated);
        }
        BExpr::Column(_) | BExpr::Literal(_) | BExpr::InValues(..) => {}
        BExpr::Not(x) | BExpr::Neg(x) | BExpr::IsNull(x, _) => materialize(x, db)?,
        BExpr::Binary(l, _, r) | BExpr::Like(l, r, _) => {
            materialize(l, db)?;
            materialize(r, db)?;
        }
        BExpr::InList(x, list, _) => {
            materialize(x, db)?;
            for y in list {
                materialize(y, db)?;
            }
        }
        BExpr::Between(x, lo, hi, _) => {
            materialize(x, db)?;
            materialize(lo, db)?;
            materialize(hi, db)?;
        }
        BExpr::Aggregate(_, arg, _) => {
            if let Some(a) = arg {
                materialize(a, db)?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Ctx<'a> {
    Row(&'a [Value]),
    Group(&'a [&'a [Value]]),
}

fn eval(e: &BExpr, ctx: Ctx<'_>) -> Result<Value, SqlError> {
    Ok(match e {
        BExpr::Column(i) => match ctx {
            Ctx::Row(r) => r[*i].clone(),
            // bare columns in a grouped query take the group's first row
            Ctx::Group(g) => g.first().map_or(Value::Null, |r| r[*i].clone()),
        },
        BExpr::Literal(v) => v.clone(),
        BExpr::Not(x) => Value::bool(!eval(x, ctx)?.truthy()?),
        BExpr::Neg(x) => match eval(x, ctx)? {
            Value::Null => Value::Null,
            Value::Integer(v) => Value::Integer(v.checked_neg().ok_or_else(overflow)?),
            Value::Real(v) => Value::Real(-v),
            Value::Text(_) => return Err(SqlError::mismatch("cannot negate text")),
        },
        BExpr::Binary(l, BinaryOp::And, r) => {
            Value::bool(eval(l, ctx)?.truthy()? && eval(r, ctx)?.truthy()?)
        }
        BExpr::Binary(l, BinaryOp::Or, r) => Value::bool(eval(l, ctx)?.truthy()? || eval(r, ctx)?.truthy()?),
        BExpr::Binary(l, op, r) => {
            let (a, b) = (eval(l, ctx)?, eval(r, ctx)?);
            if op.is_comparison() {
                Value::bool(compare(&a, *op, &b)?)
            } else {
                arith(&a, *op, &b)?
            }
        }
        BExpr::IsNull(x, negated) => Value::bool(eval(x, ctx)?.is_null() != *negated),
        BExpr::InList(x, list, negated) => {
            let v = eval(x, ctx)?;
            let mut found = false;
            for y in list {
                if v.compare(&eval(y, ctx)?)? == Some(Ordering::Equal) {
                    found = true;
                    break;
                }
            }
            Value::bool(found != *negated)
        }
        BExpr::InValues(x, values, negated) => {
            let v = eval(x, ctx)?;
            let mut found = false;
            for y in values {
                if v.compare(y)? == Some(Ordering::Equal) {
                    found = true;
                    break;
                }
            }
            Value::bool(found != *negated)
        }
        BExpr::InSubquery(..) => unreachable!("subqueries are materialized before evaluation"),
        BExpr::Between(x, lo, hi, negated) => {
            let v = eval(x, ctx)?;
            let inside = compare(&v, BinaryOp::GtEq, &eval(lo, ctx)?)?
                && compare(&v, BinaryOp::LtEq, &eval(hi, ctx)?)?;
            Value::bool(inside != *negated)
        }
        BExpr::Like(x, p, negated) => {
            let (v, p) = (eval(x, ctx)?, eval(p, ctx)?);
            if v.is_null() || p.is_null() {
                Value::bool(*negated)
            } else {
                Value::bool(like(&v.to_string(), &p.to_string()) != *negated)
            }
        }
        BExpr::Aggregate(func, arg, distinct) => {
            let Ctx::Group(group) = ctx else {
                return Err(SqlError::unsupported("aggregate outside a grouped context"));
            };
            aggregate(*func, arg.as_deref(), *distinct, group)?
        }
    })
}

fn overflow() -> SqlError {
    SqlError::mismatch("integer overflow")
}

/// Comparison with NULL on either side is false.
fn compare(a: &Value, op: BinaryOp, b: &Value) -> Result<bool, SqlError> {
    let Some(o) = a.compare(b)? else { return Ok(false) };
    Ok(match op {
        BinaryOp::Eq => o == Ordering::Equal,
        BinaryOp::NotEq => o != Ordering::Equal,
        BinaryOp::Lt => o == Ordering::Less,
        BinaryOp::LtEq => o != Ordering::Greater,
        BinaryOp::Gt => o == Ordering::Greater,
        BinaryOp::GtEq => o != Ordering::Less,
        _ => unreachable!("not a comparison"),
    })
}

fn arith(a: &Value, op: BinaryOp, b: &Value) -> Result<Value, SqlError> {
    match (a, b) {
        (Value::Null, _) | (_, Value::Null) => Ok(Value::Null),
        (Value::Integer(x), Value::Integer(y)) => {
            let r = match op {
                BinaryOp::Plus => x.checked_add(*y),
                BinaryOp::Minus => x.checked_sub(*y),
                BinaryOp::Multiply => x.checked_mul(*y),
                BinaryOp::Divide => {
                    if *y == 0 {
                        return Err(SqlError::DivisionByZero);
                    }
                    x.checked_div(*y)
                }
                _ => unreachable!("not arithmetic"),
            };
            r.map(Value::Integer).ok_or_else(overflow)
        }
        _ => {
            let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
                return Err(SqlError::mismatch(alloc::format!(
                    "arithmetic on {} and {}",
                    a.type_name(),
                    b.type_name()
                )));
            };
            Ok(Value::Real(match op {
                BinaryOp::Plus => x + y,
                BinaryOp::Minus => x - y,
                BinaryOp::Multiply => x * y,
                BinaryOp::Divide => {
                    if y == 0.0 {
                        return Err(SqlError::DivisionByZero);
                    }
                    x / y
                }
                _ => unreachable!("not arithmetic"),
            }))
        }
    }
}

fn aggregate(func: AggFunc, arg: Option<&BExpr>, distinct: bool, group: &[&[Value]]) -> Result<Value, SqlError> {
    let Some(arg) = arg else {
        return Ok(Value::Integer(group.len() as i64));
    };
    let mut values = Vec::with_capacity(group.len());
    for r in group {
        let v = eval(arg, Ctx::Row(r))?;
        if !v.is_null() {
            values.push(v);
        }
    }
    if distinct {
        let mut seen = alloc::collections::BTreeSet::new();
        values.retain(|v| seen.insert(v.canonical()));
    }
    match func {
        AggFunc::Count => Ok(Value::Integer(values.len() as i64)),
        AggFunc::Min => Ok(values.into_iter().min_by(|a, b| a.sort_cmp(b)).unwrap_or(Value::Null)),
        AggFunc::Max => Ok(values.into_iter().max_by(|a, b| a.sort_cmp(b)).unwrap_or(Value::Null)),
        AggFunc::Sum | AggFunc::Avg => {
            if values.is_empty() {
                return Ok(Value::Null);
            }
            if let Some(t) = values.iter().find(|v| matches!(v, Value::Text(_))) {
                return Err(SqlError::mismatch(alloc::format!("{} over {}", func.name(), t.type_name())));
            }
            let n = values.len();
            let total = if values.iter().all(|v| matches!(v, Value::Integer(_))) && func == AggFunc::Sum {
                let mut acc: i64 = 0;
                for v in &values {
                    if let Value::Integer(x) = v {
                        acc = acc.checked_add(*x).ok_or_else(overflow)?;
                    }
                }
                Value::Integer(acc)
            } else {
                Value::Real(values.iter().filter_map(Value::as_f64).sum())
            };
            if func == AggFunc::Sum {
                Ok(total)
            } else {
                Ok(Value::Real(total.as_f64().unwrap_or(0.0) / n as f64))
            }
        }
    }
}

/// `LIKE` with `%` and `_`, ASCII case-insensitive.
fn like(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().map(|c| c.to_ascii_lowercase()).collect();
    let p: Vec<char> = pattern.chars().map(|c| c.to_ascii_lowercase()).collect();
    let (mut ti, mut pi) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '_' || (p[pi] != '%' && p[pi] == t[ti])) {
            ti += 1;
            pi += 1;
        } else if pi < p.len() && p[pi] == '%' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '%')
}
