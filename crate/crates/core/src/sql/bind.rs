//! Name resolution of a parsed query against a schema.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::ast::*;
use super::{SqlError, Value};
use crate::ident::Ident;
use crate::schema::{ColumnRef, Schema};

pub(crate) struct Source {
    pub table_index: usize,
    pub binding: Ident,
    pub offset: usize,
    pub width: usize,
}

pub(crate) enum OrderKey {
    Expr(BExpr),
    Output(usize),
}

/// A query with every column reference resolved to a row offset.
pub(crate) struct Bound {
    pub distinct: bool,
    pub sources: Vec<Source>,
    pub join_on: Vec<BExpr>,
    pub filter: Option<BExpr>,
    pub group_by: Vec<BExpr>,
    pub having: Option<BExpr>,
    pub projection: Vec<BExpr>,
    pub order_by: Vec<(OrderKey, bool)>,
    pub limit: Option<u64>,
    pub grouped: bool,
    pub used: Vec<ColumnRef>,
}

pub(crate) enum BExpr {
    Column(usize),
    Literal(Value),
    Not(Box<BExpr>),
    Neg(Box<BExpr>),
    Binary(Box<BExpr>, BinaryOp, Box<BExpr>),
    IsNull(Box<BExpr>, bool),
    InList(Box<BExpr>, Vec<BExpr>, bool),
    InSubquery(Box<BExpr>, Box<Bound>, bool),
    /// A subquery after materialization.
    InValues(Box<BExpr>, Vec<Value>, bool),
    Between(Box<BExpr>, Box<BExpr>, Box<BExpr>, bool),
    Like(Box<BExpr>, Box<BExpr>, bool),
    Aggregate(AggFunc, Option<Box<BExpr>>, bool),
}

/// Every column the query reads, aliases resolved to base tables, in
/// first-reference order (projection, joins, WHERE, GROUP BY, HAVING,
/// ORDER BY). `*` and `COUNT(*)` expand to all columns of the tables in
/// scope.
pub fn columns_used(query: &Query, schema: &Schema) -> Result<Vec<ColumnRef>, SqlError> {
    Ok(bind(query, schema)?.used)
}

pub(crate) fn bind(query: &Query, schema: &Schema) -> Result<Bound, SqlError> {
    let mut sources = Vec::new();
    let mut offset = 0;
    for t in query.tables() {
        let table_index = schema
            .tables
            .iter()
            .position(|s| s.name == t.name)
            .ok_or_else(|| SqlError::UnresolvedIdentifier(alloc::format!("table `{}`", t.name)))?;
        let width = schema.tables[table_index].columns.len();
        sources.push(Source { table_index, binding: t.binding().clone(), offset, width });
        offset += width;
    }
    let mut b = Binder { schema, sources, used: Vec::new() };

    let mut projection = Vec::new();
    let mut aliases: Vec<Option<Ident>> = Vec::new();
    for item in &query.projection {
        match item {
            SelectItem::Wildcard => {
                for s in 0..b.sources.len() {
                    b.expand_source(s, &mut projection);
                    aliases.extend(core::iter::repeat_n(None, b.sources[s].width));
                }
            }
            SelectItem::QualifiedWildcard(q) => {
                let s = b.source_by_binding(q)?;
                b.expand_source(s, &mut projection);
                aliases.extend(core::iter::repeat_n(None, b.sources[s].width));
            }
            SelectItem::Expr { expr, alias } => {
                projection.push(b.expr(expr)?);
                aliases.push(alias.clone());
            }
        }
    }
    let join_on = query.joins.iter().map(|j| b.expr(&j.on)).collect::<Result<Vec<_>, _>>()?;
    let filter = query.selection.as_ref().map(|e| b.expr(e)).transpose()?;
    let group_by = query.group_by.iter().map(|e| b.expr(e)).collect::<Result<Vec<_>, _>>()?;
    let having = query.having.as_ref().map(|e| b.expr(e)).transpose()?;
    let mut order_by = Vec::new();
    for o in &query.order_by {
        let key = match &o.expr {
            Expr::Column(ColumnName { qualifier: None, name })
                if aliases.iter().any(|a| a.as_ref() == Some(name)) =>
            {
                OrderKey::Output(aliases.iter().position(|a| a.as_ref() == Some(name)).unwrap_or(0))
            }
            Expr::Literal(Literal::Integer(k)) => {
                let k = *k;
                if k < 1 || k as usize > projection.len() {
                    return Err(SqlError::UnresolvedIdentifier(alloc::format!("ORDER BY position {k}")));
                }
                OrderKey::Output(k as usize - 1)
            }
            e => OrderKey::Expr(b.expr(e)?),
        };
        order_by.push((key, o.descending));
    }

    let grouped = !query.group_by.is_empty()
        || query.having.is_some()
        || query.projection.iter().any(|p| matches!(p, SelectItem::Expr { expr, .. } if expr.contains_aggregate()))
        || query.order_by.iter().any(|o| o.expr.contains_aggregate());
    if query.group_by.iter().any(Expr::contains_aggregate) {
        return Err(SqlError::unsupported("aggregate in GROUP BY"));
    }

    Ok(Bound {
        distinct: query.distinct,
        sources: b.sources,
        join_on,
        filter,
        group_by,
        having,
        projection,
        order_by,
        limit: query.limit,
        grouped,
        used: b.used,
    })
}

struct Binder<'s> {
    schema: &'s Schema,
    sources: Vec<Source>,
    used: Vec<ColumnRef>,
}

impl Binder<'_> {
    fn note(&mut self, col: ColumnRef) {
        if !self.used.contains(&col) {
            self.used.push(col);
        }
    }

    fn column_ref(&self, source: usize, index: usize) -> ColumnRef {
        let t = &self.schema.tables[self.sources[source].table_index];
        ColumnRef { table: t.name.clone(), column: t.columns[index].name.clone() }
    }

    fn expand_source(&mut self, s: usize, out: &mut Vec<BExpr>) {
        for i in 0..self.sources[s].width {
            self.note(self.column_ref(s, i));
            out.push(BExpr::Column(self.sources[s].offset + i));
        }
    }

    fn note_all(&mut self) {
        for s in 0..self.sources.len() {
            for i in 0..self.sources[s].width {
                self.note(self.column_ref(s, i));
            }
        }
    }

    fn source_by_binding(&self, q: &Ident) -> Result<usize, SqlError> {
        self.sources
            .iter()
            .position(|s| &s.binding == q)
            .ok_or_else(|| SqlError::UnresolvedIdentifier(alloc::format!("`{q}` is not a table in scope")))
    }

    fn resolve(&mut self, c: &ColumnName) -> Result<usize, SqlError> {
        let (s, i) = match &c.qualifier {
            Some(q) => {
                let s = self.source_by_binding(q)?;
                let t = &self.schema.tables[self.sources[s].table_index];
                let i = t
                    .column_index(c.name.as_str())
                    .ok_or_else(|| SqlError::UnresolvedIdentifier(alloc::format!("column `{q}.{}`", c.name)))?;
                (s, i)
            }
            None => {
                let mut hit = None;
                for (s, src) in self.sources.iter().enumerate() {
                    if let Some(i) = self.schema.tables[src.table_index].column_index(c.name.as_str()) {
                        if hit.is_some() {
                            return Err(SqlError::UnresolvedIdentifier(alloc::format!(
                                "ambiguous column `{}`",
                                c.name
                            )));
                        }
                        hit = Some((s, i));
                    }
                }
                hit.ok_or_else(|| SqlError::UnresolvedIdentifier(alloc::format!("column `{}`", c.name)))?
            }
        };
        self.note(self.column_ref(s, i));
        Ok(self.sources[s].offset + i)
    }

    fn expr(&mut self, e: &Expr) -> Result<BExpr, SqlError> {
        Ok(match e {
            Expr::Column(c) => BExpr::Column(self.resolve(c)?),
            Expr::Literal(l) => BExpr::Literal(match l {
                Literal::Null => Value::Null,
                Literal::Integer(v) => Value::Integer(*v),
                Literal::Real(v) => Value::Real(*v),
                Literal::String(s) => Value::Text(s.clone()),
            }),
            Expr::Unary { op: UnaryOp::Not, expr } => BExpr::Not(Box::new(self.expr(expr)?)),
            Expr::Unary { op: UnaryOp::Neg, expr } => BExpr::Neg(Box::new(self.expr(expr)?)),
            Expr::Binary { left, op, right } => {
                BExpr::Binary(Box::new(self.expr(left)?), *op, Box::new(self.expr(right)?))
            }
            Expr::IsNull { expr, negated } => BExpr::IsNull(Box::new(self.expr(expr)?), *negated),
            Expr::InList { expr, list, negated } => {
                let e = self.expr(expr)?;
                let l = list.iter().map(|x| self.expr(x)).collect::<Result<Vec<_>, _>>()?;
                BExpr::InList(Box::new(e), l, *negated)
            }
            Expr::InSubquery { expr, subquery, negated } => {
                let e = self.expr(expr)?;
                let sub = bind(subquery, self.schema)?;
                if sub.projection.len() != 1 {
                    return Err(SqlError::mismatch("IN subquery must return exactly one column"));
                }
                for c in &sub.used {
                    self.note(c.clone());
                }
                BExpr::InSubquery(Box::new(e), Box::new(sub), *negated)
            }
            Expr::Between { expr, low, high, negated } => BExpr::Between(
                Box::new(self.expr(expr)?),
                Box::new(self.expr(low)?),
                Box::new(self.expr(high)?),
                *negated,
            ),
            Expr::Like { expr, pattern, negated } => {
                BExpr::Like(Box::new(self.expr(expr)?), Box::new(self.expr(pattern)?), *negated)
            }
            Expr::Aggregate { func, arg, distinct } => {
                let a = match arg {
                    Some(a) => Some(Box::new(self.expr(a)?)),
                    None => {
                        self.note_all();
                        None
                    }
                };
                BExpr::Aggregate(*func, a, *distinct)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_sql;
    use super::*;
    use crate::schema::{Column, Table};
    use alloc::vec;

    fn shop() -> Schema {
        Schema::new(
            "shop",
            vec![
                Table::new(
                    "customers",
                    vec![Column::new("customer_id", "integer"), Column::new("total_revenue", "real")],
                ),
                Table::new(
                    "orders",
                    vec![Column::new("customer_id", "integer"), Column::new("revenue", "real")],
                ),
                Table::new("performers", vec![Column::new("performer_id", "integer"), Column::new("name", "text")]),
                Table::new(
                    "Customers2",
                    vec![Column::new("CustomerID", "integer"), Column::new("Name", "text")],
                ),
                Table::new(
                    "Orders2",
                    vec![
                        Column::new("OrderID", "integer"),
                        Column::new("CustomerID", "integer"),
                        Column::new("TotalAmount", "real"),
                        Column::new("OrderDate", "text"),
                    ],
                ),
            ],
        )
        .unwrap()
    }

    fn used(sql: &str) -> Vec<ColumnRef> {
        columns_used(&parse_sql(sql).unwrap(), &shop()).unwrap()
    }

    #[test]
    fn intro_join_query() {
        let cols = used(
            "SELECT customers.customer_id, SUM(orders.revenue) FROM customers \
             JOIN orders ON customers.customer_id = orders.customer_id GROUP BY customers.customer_id",
        );
        assert_eq!(
            cols,
            vec![
                ColumnRef::new("customers", "customer_id"),
                ColumnRef::new("orders", "revenue"),
                ColumnRef::new("orders", "customer_id"),
            ]
        );
    }

    #[test]
    fn count_star_expands() {
        assert_eq!(
            used("SELECT COUNT(*) FROM performers"),
            vec![ColumnRef::new("performers", "performer_id"), ColumnRef::new("performers", "name")]
        );
        assert_eq!(used("SELECT * FROM performers").len(), 2);
    }

    #[test]
    fn subquery_columns_included() {
        let cols = used(
            "SELECT Name FROM Customers2 WHERE CustomerID IN \
             (SELECT CustomerID FROM Orders2 WHERE TotalAmount > 1000 AND OrderDate >= '2024-01-01')",
        );
        for c in [
            ColumnRef::new("Orders2", "CustomerID"),
            ColumnRef::new("Orders2", "TotalAmount"),
            ColumnRef::new("Orders2", "OrderDate"),
            ColumnRef::new("Customers2", "Name"),
            ColumnRef::new("Customers2", "CustomerID"),
        ] {
            assert!(cols.contains(&c), "{c}");
        }
    }

    #[test]
    fn aliases_resolve_to_base_tables() {
        let cols = used("SELECT c.customer_id FROM customers AS c JOIN orders o ON c.customer_id = o.customer_id");
        assert_eq!(
            cols,
            vec![ColumnRef::new("customers", "customer_id"), ColumnRef::new("orders", "customer_id")]
        );
    }

    #[test]
    fn resolution_errors() {
        let s = shop();
        let err = |sql: &str| columns_used(&parse_sql(sql).unwrap(), &s).unwrap_err();
        assert!(matches!(err("SELECT nope FROM customers"), SqlError::UnresolvedIdentifier(_)));
        assert!(matches!(err("SELECT x FROM ghosts"), SqlError::UnresolvedIdentifier(_)));
        assert!(matches!(
            err("SELECT customer_id FROM customers JOIN orders ON customers.customer_id = orders.customer_id"),
            SqlError::UnresolvedIdentifier(m) if m.contains("ambiguous")
        ));
        assert!(matches!(err("SELECT revenue FROM orders ORDER BY 3"), SqlError::UnresolvedIdentifier(_)));
    }
}
