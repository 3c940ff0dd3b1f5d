use nl2sql_core::sql::{execute, parse_sql, render, render_with, results_equal, Database, RenderStyle, TableData, Value};
use nl2sql_core::{Column, Schema, Table};
use proptest::prelude::*;

fn db(rows: Vec<(i64, i64, String)>) -> Database {
    let schema = Schema::new(
        "t",
        vec![
            Table::new("a", vec![Column::new("id", "integer"), Column::new("x", "integer"), Column::new("s", "text")]),
            Table::new("b", vec![Column::new("id", "integer"), Column::new("y", "integer")]),
        ],
    )
    .unwrap();
    let a = rows.iter().map(|(i, x, s)| vec![Value::Integer(*i), Value::Integer(*x), Value::Text(s.clone())]).collect();
    let b = rows.iter().map(|(i, x, _)| vec![Value::Integer(*i % 3), Value::Integer(x * 2)]).collect();
    Database::new(schema, vec![TableData { name: "a".into(), rows: a }, TableData { name: "b".into(), rows: b }]).unwrap()
}

fn rows() -> impl Strategy<Value = Vec<(i64, i64, String)>> {
    prop::collection::vec((0i64..6, -5i64..5, "[a-c]{0,2}"), 0..8)
}

fn column() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("a.id"), Just("a.x"), Just("a.s"), Just("b.y")]
}

fn numeric() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("a.id"), Just("a.x"), Just("b.y")]
}

fn predicate() -> impl Strategy<Value = String> {
    prop_oneof![
        (numeric(), -3i64..3).prop_map(|(c, v)| format!("{c} > {v}")),
        (numeric(), -3i64..3).prop_map(|(c, v)| format!("NOT {c} = {v}")),
        (numeric(), -2i64..0, 0i64..3).prop_map(|(c, l, h)| format!("{c} BETWEEN {l} AND {h}")),
        "[a-c%_]{1,3}".prop_map(|p| format!("a.s LIKE '{p}'")),
        prop::collection::vec(-3i64..3, 1..4).prop_map(|v| format!(
            "a.x IN ({})",
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        )),
        Just("a.id IN (SELECT id FROM b WHERE y > 0)".to_string()),
    ]
}

fn query() -> impl Strategy<Value = String> {
    let plain = (prop::collection::vec(column(), 1..4), prop::option::of(predicate()), any::<bool>(), any::<bool>())
        .prop_map(|(cols, pred, distinct, order)| {
            let mut q = format!(
                "SELECT {}{} FROM a JOIN b ON a.id = b.id",
                if distinct { "DISTINCT " } else { "" },
                cols.join(", ")
            );
            if let Some(p) = pred {
                q += &format!(" WHERE {p}");
            }
            if order {
                q += &format!(" ORDER BY {} DESC", cols[0]);
            }
            q
        });
    let grouped = (column(), prop_oneof![Just("COUNT(*)"), Just("SUM(a.x)"), Just("MAX(a.s)"), Just("AVG(b.y)")], prop::option::of(1i64..3))
        .prop_map(|(g, agg, having)| {
            let mut q = format!("SELECT {g}, {agg} FROM a JOIN b ON a.id = b.id GROUP BY {g}");
            if let Some(h) = having {
                q += &format!(" HAVING COUNT(*) >= {h}");
            }
            q
        });
    prop_oneof![plain, grouped]
}

proptest! {
    #[test]
    fn render_parse_fixpoint(sql in query()) {
        let q = parse_sql(&sql).unwrap();
        let text = render(&q);
        let again = parse_sql(&text).unwrap();
        prop_assert_eq!(&again, &q);
        prop_assert_eq!(render(&again), text);
        for (lowercase_keywords, trailing_semicolon) in [(true, false), (false, true), (true, true)] {
            let styled = render_with(&q, RenderStyle { lowercase_keywords, trailing_semicolon });
            prop_assert_eq!(parse_sql(&styled).unwrap(), q.clone());
        }
    }

    #[test]
    fn rendering_preserves_results(sql in query(), data in rows()) {
        let d = db(data);
        let q = parse_sql(&sql).unwrap();
        let styled = parse_sql(&render_with(&q, RenderStyle { lowercase_keywords: true, trailing_semicolon: true })).unwrap();
        let a = execute(&q, &d).unwrap();
        let b = execute(&styled, &d).unwrap();
        prop_assert!(results_equal(&a, &b));
    }

    #[test]
    fn results_equal_is_reflexive_and_symmetric(s1 in query(), s2 in query(), data in rows()) {
        let d = db(data);
        let a = execute(&parse_sql(&s1).unwrap(), &d).unwrap();
        let b = execute(&parse_sql(&s2).unwrap(), &d).unwrap();
        prop_assert!(results_equal(&a, &a));
        prop_assert_eq!(results_equal(&a, &b), results_equal(&b, &a));
    }

    #[test]
    fn row_order_ignored_without_order_by(data in rows()) {
        let d = db(data.clone());
        let mut rev = data;
        rev.reverse();
        let r = db(rev);
        let sql = "SELECT a.s, b.y FROM a JOIN b ON a.id = b.id";
        let x = execute(&parse_sql(sql).unwrap(), &d).unwrap();
        let y = execute(&parse_sql(sql).unwrap(), &r).unwrap();
        prop_assert!(results_equal(&x, &y));
    }
}
