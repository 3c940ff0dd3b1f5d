//! Recursive-descent parser for the supported `SELECT` subset.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SqlError;
use crate::ident::Ident;

/// Words that cannot be used as bare identifiers.
pub(crate) const RESERVED: &[&str] = &[
    "ALL", "AND", "AS", "ASC", "BETWEEN", "BY", "CASE", "CAST", "CROSS", "DESC", "DISTINCT", "ELSE", "END",
    "EXCEPT", "EXISTS", "FROM", "FULL", "GROUP", "HAVING", "IN", "INNER", "INTERSECT", "INTERVAL", "IS", "JOIN",
    "LEFT", "LIKE", "LIMIT", "NATURAL", "NOT", "NULL", "OFFSET", "ON", "OR", "ORDER", "OUTER", "OVER", "RIGHT",
    "SELECT", "THEN", "UNION", "USING", "WHEN", "WHERE", "WITH",
];

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

/// Parses one statement. A trailing `;` is accepted.
pub fn parse_sql(text: &str) -> Result<Query, SqlError> {
    if text.trim().is_empty() {
        return Err(SqlError::syntax("empty query", 0));
    }
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0, depth: 0 };
    let query = p.query()?;
    p.eat_sym(";");
    match &p.peek().tok {
        Tok::End => {}
        Tok::Word(w) if ["UNION", "INTERSECT", "EXCEPT"].iter().any(|k| k.eq_ignore_ascii_case(w)) => {
            return Err(SqlError::unsupported("set operation"));
        }
        _ => return Err(p.unexpected("end of statement")),
    }
    check_scopes(&query, None)?;
    Ok(query)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn advance(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> SqlError {
        let t = self.peek();
        let found = match &t.tok {
            Tok::End => String::from("end of input"),
            Tok::Word(w) => alloc::format!("`{w}`"),
            Tok::Quoted(w) => alloc::format!("`\"{w}\"`"),
            Tok::Integer(v) => alloc::format!("`{v}`"),
            Tok::Real(v) => alloc::format!("`{v}`"),
            Tok::Str(s) => alloc::format!("'{s}'"),
            Tok::Sym(s) => alloc::format!("`{s}`"),
        };
        SqlError::syntax(alloc::format!("expected {wanted}, found {found}"), t.offset)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn is_kw_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(kw))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SqlError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&alloc::format!("`{s}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<Ident, SqlError> {
        match &self.peek().tok {
            Tok::Word(w) if !is_reserved(w) => {
                let id = Ident::new(w.clone());
                self.advance();
                Ok(id)
            }
            Tok::Quoted(w) => {
                let id = Ident::new(w.clone());
                self.advance();
                Ok(id)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn optional_alias(&mut self) -> Result<Option<Ident>, SqlError> {
        if self.eat_kw("AS") {
            return self.ident("alias").map(Some);
        }
        match &self.peek().tok {
            Tok::Word(w) if !is_reserved(w) => self.ident("alias").map(Some),
            Tok::Quoted(_) => self.ident("alias").map(Some),
            _ => Ok(None),
        }
    }

    fn query(&mut self) -> Result<Query, SqlError> {
        if self.is_kw("WITH") {
            return Err(SqlError::unsupported("common table expression"));
        }
        self.expect_kw("SELECT")?;
        let distinct = self.eat_kw("DISTINCT");
        if !distinct {
            self.eat_kw("ALL");
        }
        let mut projection = Vec::new();
        loop {
            projection.push(self.select_item()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_kw("FROM")?;
        let from = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            if self.is_sym(",") {
                return Err(SqlError::unsupported("implicit cross join"));
            }
            for (kw, feature) in [
                ("LEFT", "outer join"),
                ("RIGHT", "outer join"),
                ("FULL", "outer join"),
                ("OUTER", "outer join"),
                ("CROSS", "cross join"),
                ("NATURAL", "natural join"),
            ] {
                if self.is_kw(kw) {
                    return Err(SqlError::unsupported(feature));
                }
            }
            if self.eat_kw("INNER") {
                if !self.is_kw("JOIN") {
                    return Err(self.unexpected("JOIN"));
                }
            }
            if !self.eat_kw("JOIN") {
                break;
            }
            let table = self.table_ref()?;
            if self.is_kw("USING") {
                return Err(SqlError::unsupported("JOIN ... USING"));
            }
            self.expect_kw("ON")?;
            let on = self.expr()?;
            joins.push(Join { table, on });
        }
        let selection = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let having = if self.eat_kw("HAVING") { Some(self.expr()?) } else { None };
        let mut order_by = Vec::new();
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            loop {
                let expr = self.expr()?;
                let descending = if self.eat_kw("DESC") {
                    true
                } else {
                    self.eat_kw("ASC");
                    false
                };
                order_by.push(OrderItem { expr, descending });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let limit = if self.eat_kw("LIMIT") {
            match self.peek().tok {
                Tok::Integer(n) if n >= 0 => {
                    self.advance();
                    if self.is_sym(",") || self.is_kw("OFFSET") {
                        return Err(SqlError::unsupported("OFFSET"));
                    }
                    Some(n as u64)
                }
                _ => return Err(self.unexpected("non-negative integer after LIMIT")),
            }
        } else {
            None
        };
        if self.is_kw("OFFSET") {
            return Err(SqlError::unsupported("OFFSET"));
        }
        Ok(Query { distinct, projection, from, joins, selection, group_by, having, order_by, limit })
    }

    fn select_item(&mut self) -> Result<SelectItem, SqlError> {
        if self.eat_sym("*") {
            return Ok(SelectItem::Wildcard);
        }
        let qualified_star = matches!(self.peek().tok, Tok::Word(_) | Tok::Quoted(_))
            && matches!(self.peek_at(1), Tok::Sym("."))
            && matches!(self.peek_at(2), Tok::Sym("*"));
        if qualified_star {
            let q = self.ident("table name")?;
            self.advance();
            self.advance();
            return Ok(SelectItem::QualifiedWildcard(q));
        }
        let expr = self.expr()?;
        let alias = self.optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn table_ref(&mut self) -> Result<TableRef, SqlError> {
        if self.is_sym("(") {
            return Err(SqlError::unsupported("derived table"));
        }
        let name = self.ident("table name")?;
        if self.is_sym(".") {
            return Err(SqlError::unsupported("schema-qualified table name"));
        }
        let alias = self.optional_alias()?;
        Ok(TableRef { name, alias })
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, SqlError> {
        self.or()
    }

    fn or(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.and()?;
        while self.eat_kw("OR") {
            let right = self.and()?;
            left = Expr::binary(left, BinaryOp::Or, right);
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.not()?;
        while self.eat_kw("AND") {
            let right = self.not()?;
            left = Expr::binary(left, BinaryOp::And, right);
        }
        Ok(left)
    }

    fn not(&mut self) -> Result<Expr, SqlError> {
        if self.is_kw("NOT") {
            if self.is_kw_at(1, "EXISTS") {
                return Err(SqlError::unsupported("EXISTS subquery"));
            }
            self.advance();
            let inner = self.not()?;
            return Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(inner) });
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Expr, SqlError> {
        let left = self.additive()?;
        let cmp = match &self.peek().tok {
            Tok::Sym("=") => Some(BinaryOp::Eq),
            Tok::Sym("<>") | Tok::Sym("!=") => Some(BinaryOp::NotEq),
            Tok::Sym("<") => Some(BinaryOp::Lt),
            Tok::Sym("<=") => Some(BinaryOp::LtEq),
            Tok::Sym(">") => Some(BinaryOp::Gt),
            Tok::Sym(">=") => Some(BinaryOp::GtEq),
            _ => None,
        };
        if let Some(op) = cmp {
            self.advance();
            if self.is_kw("ANY") || self.is_kw("SOME") || self.is_kw("ALL") {
                return Err(SqlError::unsupported("quantified comparison"));
            }
            let right = self.additive()?;
            return Ok(Expr::binary(left, op, right));
        }
        if self.eat_kw("IS") {
            let negated = self.eat_kw("NOT");
            self.expect_kw("NULL")?;
            return Ok(Expr::IsNull { expr: Box::new(left), negated });
        }
        let negated = if self.is_kw("NOT")
            && (self.is_kw_at(1, "IN") || self.is_kw_at(1, "LIKE") || self.is_kw_at(1, "BETWEEN"))
        {
            self.advance();
            true
        } else {
            false
        };
        if self.eat_kw("IN") {
            self.expect_sym("(")?;
            if self.is_kw("SELECT") {
                if self.depth > 0 {
                    return Err(SqlError::unsupported("nested subquery"));
                }
                self.depth += 1;
                let sub = self.query()?;
                self.depth -= 1;
                self.expect_sym(")")?;
                return Ok(Expr::InSubquery { expr: Box::new(left), subquery: Box::new(sub), negated });
            }
            let mut list = Vec::new();
            loop {
                list.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
            return Ok(Expr::InList { expr: Box::new(left), list, negated });
        }
        if self.eat_kw("LIKE") {
            let pattern = self.additive()?;
            return Ok(Expr::Like { expr: Box::new(left), pattern: Box::new(pattern), negated });
        }
        if self.eat_kw("BETWEEN") {
            let low = self.additive()?;
            self.expect_kw("AND")?;
            let high = self.additive()?;
            return Ok(Expr::Between { expr: Box::new(left), low: Box::new(low), high: Box::new(high), negated });
        }
        if negated {
            return Err(self.unexpected("IN, LIKE or BETWEEN"));
        }
        Ok(left)
    }

    fn additive(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.multiplicative()?;
        loop {
            let op = if self.eat_sym("+") {
                BinaryOp::Plus
            } else if self.eat_sym("-") {
                BinaryOp::Minus
            } else if self.is_sym("||") {
                return Err(SqlError::unsupported("string concatenation"));
            } else {
                break;
            };
            let right = self.multiplicative()?;
            left = Expr::binary(left, op, right);
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinaryOp::Multiply
            } else if self.eat_sym("/") {
                BinaryOp::Divide
            } else {
                break;
            };
            let right = self.unary()?;
            left = Expr::binary(left, op, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, SqlError> {
        if self.eat_sym("-") {
            let inner = self.unary()?;
            return Ok(Expr::Unary { op: UnaryOp::Neg, expr: Box::new(inner) });
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        let tok = self.peek().tok.clone();
        match tok {
            Tok::Integer(v) => {
                self.advance();
                Ok(Expr::Literal(Literal::Integer(v)))
            }
            Tok::Real(v) => {
                self.advance();
                Ok(Expr::Literal(Literal::Real(v)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Literal(Literal::String(s)))
            }
            Tok::Sym("(") => {
                self.advance();
                if self.is_kw("SELECT") {
                    return Err(SqlError::unsupported("scalar subquery"));
                }
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Quoted(_) => self.column_ref(),
            Tok::Word(w) => {
                if w.eq_ignore_ascii_case("NULL") {
                    self.advance();
                    return Ok(Expr::Literal(Literal::Null));
                }
                for (kw, feature) in [
                    ("CASE", "CASE expression"),
                    ("EXISTS", "EXISTS subquery"),
                    ("CAST", "CAST"),
                    ("INTERVAL", "INTERVAL expression"),
                ] {
                    if w.eq_ignore_ascii_case(kw) {
                        return Err(SqlError::unsupported(feature));
                    }
                }
                if matches!(self.peek_at(1), Tok::Sym("(")) {
                    return self.call(&w);
                }
                if is_reserved(&w) {
                    return Err(self.unexpected("expression"));
                }
                self.column_ref()
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn column_ref(&mut self) -> Result<Expr, SqlError> {
        let first = self.ident("column name")?;
        if self.eat_sym(".") {
            let second = self.ident("column name")?;
            if self.is_sym(".") {
                return Err(SqlError::unsupported("schema-qualified column"));
            }
            return Ok(Expr::Column(ColumnName { qualifier: Some(first), name: second }));
        }
        Ok(Expr::Column(ColumnName { qualifier: None, name: first }))
    }

    fn call(&mut self, name: &str) -> Result<Expr, SqlError> {
        let Some(func) = AggFunc::from_name(name) else {
            return Err(SqlError::unsupported(alloc::format!("function {}", name.to_ascii_uppercase())));
        };
        self.advance();
        self.expect_sym("(")?;
        let distinct = self.eat_kw("DISTINCT");
        let arg = if self.is_sym("*") {
            if func != AggFunc::Count || distinct {
                return Err(self.unexpected("expression"));
            }
            self.advance();
            None
        } else {
            let e = self.expr()?;
            if e.contains_aggregate() {
                return Err(SqlError::unsupported("nested aggregate"));
            }
            Some(Box::new(e))
        };
        self.expect_sym(")")?;
        if self.is_kw("OVER") {
            return Err(SqlError::unsupported("window function"));
        }
        if self.is_kw("FILTER") && matches!(self.peek_at(1), Tok::Sym("(")) {
            return Err(SqlError::unsupported("aggregate FILTER clause"));
        }
        Ok(Expr::Aggregate { func, arg, distinct })
    }
}

/// Every qualifier must name a table binding of its own query; bindings
/// must be unique within a query.
fn check_scopes(query: &Query, outer: Option<&[&Ident]>) -> Result<(), SqlError> {
    let mut bindings: Vec<&Ident> = Vec::new();
    for t in query.tables() {
        let b = t.binding();
        if bindings.contains(&b) {
            return Err(SqlError::UnresolvedIdentifier(alloc::format!("ambiguous table binding `{b}`")));
        }
        bindings.push(b);
    }
    let check = |q: &Ident| -> Result<(), SqlError> {
        if bindings.contains(&q) {
            Ok(())
        } else if outer.is_some_and(|o| o.contains(&q)) {
            Err(SqlError::unsupported("correlated subquery"))
        } else {
            Err(SqlError::UnresolvedIdentifier(alloc::format!("`{q}` is not a table in scope")))
        }
    };
    for item in &query.projection {
        if let SelectItem::QualifiedWildcard(q) = item {
            check(q)?;
        }
    }
    let mut result = Ok(());
    let mut visit = |e: &Expr| {
        if result.is_err() {
            return;
        }
        match e {
            Expr::Column(ColumnName { qualifier: Some(q), .. }) => result = check(q),
            Expr::InSubquery { subquery, .. } => result = check_scopes(subquery, Some(&bindings)),
            _ => {}
        }
    };
    for item in &query.projection {
        if let SelectItem::Expr { expr, .. } = item {
            expr.walk(&mut visit);
        }
    }
    for j in &query.joins {
        j.on.walk(&mut visit);
    }
    for e in query.selection.iter().chain(&query.group_by).chain(&query.having) {
        e.walk(&mut visit);
    }
    for o in &query.order_by {
        o.expr.walk(&mut visit);
    }
    result?;
    for e in query.selection.iter() {
        if e.contains_aggregate() {
            return Err(SqlError::unsupported("aggregate in WHERE"));
        }
    }
    for j in &query.joins {
        if j.on.contains_aggregate() {
            return Err(SqlError::unsupported("aggregate in JOIN condition"));
        }
    }
    Ok(())
}
