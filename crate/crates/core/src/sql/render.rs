//! SQL text rendering. `parse_sql(render(q)) == q` for every parsed query.

use alloc::string::String;
use core::fmt::Write;

use super::ast::*;
use super::parser::is_reserved;
use crate::ident::Ident;

/// Cosmetic options; none of them change the parsed form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderStyle {
    pub lowercase_keywords: bool,
    pub trailing_semicolon: bool,
}

pub fn render(query: &Query) -> String {
    render_with(query, RenderStyle::default())
}

pub fn render_with(query: &Query, style: RenderStyle) -> String {
    let mut r = Renderer { out: String::new(), style };
    r.query(query);
    if style.trailing_semicolon {
        r.out.push(';');
    }
    r.out
}

pub fn render_expr(expr: &Expr) -> String {
    let mut r = Renderer { out: String::new(), style: RenderStyle::default() };
    r.expr(expr, 0);
    r.out
}

/// Quotes an identifier when it would not lex back as a bare word.
pub fn quote_ident(id: &Ident) -> String {
    let s = id.as_str();
    let bare = s.bytes().next().is_some_and(|b| b.is_ascii_alphabetic() || b == b'_')
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
        && !is_reserved(s);
    if bare {
        s.into()
    } else {
        alloc::format!("\"{}\"", s.replace('"', "\"\""))
    }
}

struct Renderer {
    out: String,
    style: RenderStyle,
}

impl Renderer {
    fn kw(&mut self, kw: &str) {
        if self.style.lowercase_keywords {
            self.out.push_str(&kw.to_ascii_lowercase());
        } else {
            self.out.push_str(kw);
        }
    }

    fn ident(&mut self, id: &Ident) {
        self.out.push_str(&quote_ident(id));
    }

    fn table(&mut self, t: &TableRef) {
        self.ident(&t.name);
        if let Some(a) = &t.alias {
            self.out.push(' ');
            self.kw("AS");
            self.out.push(' ');
            self.ident(a);
        }
    }

    fn query(&mut self, q: &Query) {
        self.kw("SELECT");
        self.out.push(' ');
        if q.distinct {
            self.kw("DISTINCT");
            self.out.push(' ');
        }
        for (i, item) in q.projection.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            match item {
                SelectItem::Wildcard => self.out.push('*'),
                SelectItem::QualifiedWildcard(t) => {
                    self.ident(t);
                    self.out.push_str(".*");
                }
                SelectItem::Expr { expr, alias } => {
                    self.expr(expr, 0);
                    if let Some(a) = alias {
                        self.out.push(' ');
                        self.kw("AS");
                        self.out.push(' ');
                        self.ident(a);
                    }
                }
            }
        }
        self.out.push(' ');
        self.kw("FROM");
        self.out.push(' ');
        self.table(&q.from);
        for j in &q.joins {
            self.out.push(' ');
            self.kw("JOIN");
            self.out.push(' ');
            self.table(&j.table);
            self.out.push(' ');
            self.kw("ON");
            self.out.push(' ');
            self.expr(&j.on, 0);
        }
        if let Some(w) = &q.selection {
            self.out.push(' ');
            self.kw("WHERE");
            self.out.push(' ');
            self.expr(w, 0);
        }
        if !q.group_by.is_empty() {
            self.out.push(' ');
            self.kw("GROUP BY");
            self.out.push(' ');
            for (i, e) in q.group_by.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.expr(e, 0);
            }
        }
        if let Some(h) = &q.having {
            self.out.push(' ');
            self.kw("HAVING");
            self.out.push(' ');
            self.expr(h, 0);
        }
        if !q.order_by.is_empty() {
            self.out.push(' ');
            self.kw("ORDER BY");
            self.out.push(' ');
            for (i, o) in q.order_by.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.expr(&o.expr, 0);
                if o.descending {
                    self.out.push(' ');
                    self.kw("DESC");
                }
            }
        }
        if let Some(n) = q.limit {
            self.out.push(' ');
            self.kw("LIMIT");
            let _ = write!(self.out, " {n}");
        }
    }

    /// Renders `e`, parenthesized when it binds looser than `min_prec`.
    fn expr(&mut self, e: &Expr, min_prec: u8) {
        let prec = e.precedence();
        let paren = prec < min_prec;
        if paren {
            self.out.push('(');
        }
        match e {
            Expr::Column(c) => {
                if let Some(q) = &c.qualifier {
                    self.ident(q);
                    self.out.push('.');
                }
                self.ident(&c.name);
            }
            Expr::Literal(l) => self.literal(l),
            Expr::Unary { op: UnaryOp::Not, expr } => {
                self.kw("NOT");
                self.out.push(' ');
                self.expr(expr, 3);
            }
            Expr::Unary { op: UnaryOp::Neg, expr } => {
                self.out.push('-');
                // `--` would start a comment
                let needs_paren = matches!(**expr, Expr::Unary { op: UnaryOp::Neg, .. });
                self.expr(expr, if needs_paren { 9 } else { 7 });
            }
            Expr::Binary { left, op, right } => {
                let p = op.precedence();
                // comparisons are non-associative; other operators are left-associative
                let left_min = if op.is_comparison() { p + 1 } else { p };
                self.expr(left, left_min);
                self.out.push(' ');
                match op {
                    BinaryOp::And | BinaryOp::Or => self.kw(op.symbol()),
                    _ => self.out.push_str(op.symbol()),
                }
                self.out.push(' ');
                self.expr(right, p + 1);
            }
            Expr::IsNull { expr, negated } => {
                self.expr(expr, 5);
                self.out.push(' ');
                self.kw(if *negated { "IS NOT NULL" } else { "IS NULL" });
            }
            Expr::InList { expr, list, negated } => {
                self.expr(expr, 5);
                self.out.push(' ');
                self.kw(if *negated { "NOT IN" } else { "IN" });
                self.out.push_str(" (");
                for (i, x) in list.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.expr(x, 0);
                }
                self.out.push(')');
            }
            Expr::InSubquery { expr, subquery, negated } => {
                self.expr(expr, 5);
                self.out.push(' ');
                self.kw(if *negated { "NOT IN" } else { "IN" });
                self.out.push_str(" (");
                self.query(subquery);
                self.out.push(')');
            }
            Expr::Between { expr, low, high, negated } => {
                self.expr(expr, 5);
                self.out.push(' ');
                self.kw(if *negated { "NOT BETWEEN" } else { "BETWEEN" });
                self.out.push(' ');
                self.expr(low, 5);
                self.out.push(' ');
                self.kw("AND");
                self.out.push(' ');
                self.expr(high, 5);
            }
            Expr::Like { expr, pattern, negated } => {
                self.expr(expr, 5);
                self.out.push(' ');
                self.kw(if *negated { "NOT LIKE" } else { "LIKE" });
                self.out.push(' ');
                self.expr(pattern, 5);
            }
            Expr::Aggregate { func, arg, distinct } => {
                self.kw(func.name());
                self.out.push('(');
                if *distinct {
                    self.kw("DISTINCT");
                    self.out.push(' ');
                }
                match arg {
                    Some(a) => self.expr(a, 0),
                    None => self.out.push('*'),
                }
                self.out.push(')');
            }
        }
        if paren {
            self.out.push(')');
        }
    }

    fn literal(&mut self, l: &Literal) {
        match l {
            Literal::Null => self.kw("NULL"),
            Literal::Integer(v) => {
                let _ = write!(self.out, "{v}");
            }
            Literal::Real(v) => {
                let _ = write!(self.out, "{v:?}");
            }
            Literal::String(s) => {
                self.out.push('\'');
                self.out.push_str(&s.replace('\'', "''"));
                self.out.push('\'');
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_sql;
    use super::*;

    #[test]
    fn canonical_text() {
        let q = parse_sql("select  a , count(*)  from t as x where  x.a>1 group by a order by a desc limit 3;").unwrap();
        assert_eq!(
            render(&q),
            "SELECT a, COUNT(*) FROM t AS x WHERE x.a > 1 GROUP BY a ORDER BY a DESC LIMIT 3"
        );
    }

    #[test]
    fn lowercase_style_parses_back() {
        let q = parse_sql("SELECT DISTINCT a FROM t WHERE a IS NOT NULL AND b IN (1, 2)").unwrap();
        let s = render_with(&q, RenderStyle { lowercase_keywords: true, trailing_semicolon: true });
        assert_eq!(s, "select distinct a from t where a is not null and b in (1, 2);");
        assert_eq!(parse_sql(&s).unwrap(), q);
    }

    #[test]
    fn parens_preserved() {
        for sql in [
            "SELECT a FROM t WHERE (a = 1 OR b = 2) AND c = 3",
            "SELECT a - (b - c) FROM t",
            "SELECT -(-a) FROM t",
            "SELECT a FROM t WHERE NOT (a = 1 AND b = 2)",
            "SELECT a FROM t WHERE (a = 1) = (b = 2)",
            "SELECT \"select\", \"two words\" FROM \"my table\"",
            "SELECT 1.5, 1e100, 'it''s' FROM t",
        ] {
            let q = parse_sql(sql).unwrap();
            let text = render(&q);
            assert_eq!(parse_sql(&text).unwrap(), q, "{sql} -> {text}");
        }
    }
}
