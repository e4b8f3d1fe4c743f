//! Recursive-descent parser for the query dialect.

use crate::agg::Aggregate;
use crate::datamodel::{UpdateFn, UpdateKind};
use crate::error::{Error, Result};
use crate::hql::ast::*;
use crate::hql::lexer::{syntax_error, tokenize, Tok, Token};
use crate::value::Value;

pub fn parse_query(text: &str) -> Result<Query> {
    let mut p = Parser::new(text)?;
    let q = p.query()?;
    p.expect_eof()?;
    Ok(q)
}

pub fn parse_whatif(text: &str) -> Result<WhatIfQuery> {
    let mut p = Parser::new(text)?;
    let head = p.head()?;
    let q = p.whatif_tail(head)?;
    p.expect_eof()?;
    Ok(q)
}

pub fn parse_howto(text: &str) -> Result<HowToQuery> {
    let mut p = Parser::new(text)?;
    let head = p.head()?;
    let q = p.howto_tail(head)?;
    p.expect_eof()?;
    Ok(q)
}

/// Parses a standalone predicate (as used by the WHEN/FOR clauses).
pub fn parse_pred(text: &str) -> Result<Pred> {
    let mut p = Parser::new(text)?;
    let pred = p.pred()?;
    p.expect_eof()?;
    Ok(pred)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    in_when: bool,
}

type Head = (UseSpec, Option<Pred>);

impl Parser {
    fn new(text: &str) -> Result<Parser> {
        Ok(Parser { toks: tokenize(text)?, pos: 0, in_when: false })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (l, c) = self.here();
        Err(syntax_error(l, c, msg))
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T> {
        self.err(format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(x) if *x == k)
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.unexpected(k)
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.unexpected(&t.describe())
        }
    }

    fn expect_eof(&self) -> Result<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.unexpected("end of query")
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            Tok::Kw(k) => self.err(format!("expected identifier, found reserved word {k}")),
            _ => self.unexpected("identifier"),
        }
    }

    fn query(&mut self) -> Result<Query> {
        let head = self.head()?;
        if self.is_kw("HOWTOUPDATE") {
            Ok(Query::HowTo(self.howto_tail(head)?))
        } else {
            Ok(Query::WhatIf(self.whatif_tail(head)?))
        }
    }

    fn head(&mut self) -> Result<Head> {
        self.expect_kw("USE")?;
        let use_spec = self.use_spec()?;
        let when = if self.eat_kw("WHEN") {
            self.in_when = true;
            let p = self.pred();
            self.in_when = false;
            Some(p?)
        } else {
            None
        };
        Ok((use_spec, when))
    }

    fn whatif_tail(&mut self, (use_spec, when): Head) -> Result<WhatIfQuery> {
        if !self.is_kw("UPDATE") {
            return self.unexpected("UPDATE");
        }
        let mut updates = Vec::new();
        loop {
            self.expect_kw("UPDATE")?;
            updates.push(self.update_clause()?);
            let more = (self.is_kw("AND") || *self.peek() == Tok::Comma) && matches!(self.peek_at(1), Tok::Kw("UPDATE"));
            if !more {
                break;
            }
            self.bump();
        }
        self.expect_kw("OUTPUT")?;
        let output = self.output()?;
        let for_pred = if self.eat_kw("FOR") { Some(self.pred()?) } else { None };
        Ok(WhatIfQuery { use_spec, when, updates, output, for_pred })
    }

    fn howto_tail(&mut self, (use_spec, when): Head) -> Result<HowToQuery> {
        self.expect_kw("HOWTOUPDATE")?;
        let mut attrs = vec![self.ident()?];
        while self.eat(&Tok::Comma) {
            attrs.push(self.ident()?);
        }
        let mut limits = Vec::new();
        if self.eat_kw("LIMIT") {
            limits.push(self.limit()?);
            while self.eat_kw("AND") {
                limits.push(self.limit()?);
            }
        }
        let goal = self.goal()?;
        let for_pred = if self.eat_kw("FOR") { Some(self.pred()?) } else { None };
        Ok(HowToQuery { use_spec, when, attrs, limits, goal, for_pred })
    }

    fn goal(&mut self) -> Result<Goal> {
        if self.is_kw("TOMINIMIZE") && matches!(self.peek_at(1), Tok::Kw("COST")) {
            self.bump();
            self.bump();
            self.expect_kw("SUCH")?;
            self.expect_kw("THAT")?;
            let output = self.output()?;
            let bound = match self.bump() {
                Tok::Ge => Bound::AtLeast,
                Tok::Le => Bound::AtMost,
                _ => {
                    self.pos -= 1;
                    return self.unexpected("`>=` or `<=`");
                }
            };
            let threshold = self.signed_number()?;
            return Ok(Goal::MinCost(CostGoal { output, bound, threshold }));
        }
        let mut objectives = vec![self.objective()?];
        while self.eat_kw("THEN") {
            objectives.push(self.objective()?);
        }
        Ok(Goal::Optimize(objectives))
    }

    fn objective(&mut self) -> Result<Objective> {
        let sense = if self.eat_kw("TOMAXIMIZE") {
            Sense::Maximize
        } else if self.eat_kw("TOMINIMIZE") {
            Sense::Minimize
        } else {
            return self.unexpected("TOMAXIMIZE or TOMINIMIZE");
        };
        Ok(Objective { sense, output: self.output()? })
    }

    fn post_attr(&mut self) -> Result<String> {
        match self.peek() {
            Tok::Kw("POST") => {
                self.bump();
                self.expect(Tok::LParen)?;
                let a = self.ident()?;
                self.expect(Tok::RParen)?;
                Ok(a)
            }
            Tok::Ident(_) => self.ident(),
            _ => self.unexpected("POST(attribute)"),
        }
    }

    fn limit(&mut self) -> Result<Limit> {
        if self.eat_kw("L1") {
            let mut attrs = vec![self.l1_term()?];
            while self.eat(&Tok::Plus) {
                self.expect_kw("L1")?;
                attrs.push(self.l1_term()?);
            }
            if !self.eat(&Tok::Le) {
                return self.unexpected("`<=` after L1(...)");
            }
            let (l, c) = self.here();
            let budget = self.signed_number()?;
            if budget < 0.0 {
                return Err(syntax_error(l, c, "L1 budget must be non-negative"));
            }
            return Ok(Limit::L1 { attrs, budget });
        }
        if matches!(self.peek(), Tok::Num(_) | Tok::Minus) {
            let lo = self.signed_number()?;
            self.limit_le()?;
            let attr = self.post_attr()?;
            let hi = if matches!(self.peek(), Tok::Le | Tok::Lt) {
                self.limit_le()?;
                Some(self.signed_number()?)
            } else {
                None
            };
            return Ok(Limit::Range { attr, lo: Some(lo), hi });
        }
        let attr = self.post_attr()?;
        if self.eat_kw("IN") {
            let values = self.literal_list()?;
            return Ok(Limit::In { attr, values });
        }
        match self.peek() {
            Tok::Le => {
                self.bump();
                Ok(Limit::Range { attr, lo: None, hi: Some(self.signed_number()?) })
            }
            Tok::Ge => {
                self.bump();
                Ok(Limit::Range { attr, lo: Some(self.signed_number()?), hi: None })
            }
            Tok::Lt | Tok::Gt => self.err("limits use inclusive bounds `<=` / `>=`"),
            _ => self.unexpected("`<=`, `>=` or IN"),
        }
    }

    fn limit_le(&mut self) -> Result<()> {
        match self.peek() {
            Tok::Le => {
                self.bump();
                Ok(())
            }
            Tok::Lt => self.err("limits use inclusive bounds `<=` / `>=`"),
            _ => self.unexpected("`<=`"),
        }
    }

    /// `(PRE(a), POST(a))` or `(POST(a), PRE(a))`.
    fn l1_term(&mut self) -> Result<String> {
        self.expect(Tok::LParen)?;
        let first_pre = if self.eat_kw("PRE") {
            true
        } else if self.eat_kw("POST") {
            false
        } else {
            return self.unexpected("PRE or POST");
        };
        self.expect(Tok::LParen)?;
        let a = self.ident()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Comma)?;
        self.expect_kw(if first_pre { "POST" } else { "PRE" })?;
        self.expect(Tok::LParen)?;
        let (l, c) = self.here();
        let b = self.ident()?;
        if a != b {
            return Err(syntax_error(l, c, format!("L1 compares `{a}` with `{b}`; both sides must name one attribute")));
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::RParen)?;
        Ok(a)
    }

    fn signed_number(&mut self) -> Result<f64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(if neg { -x } else { x })
            }
            _ => self.unexpected("number"),
        }
    }

    fn literal(&mut self) -> Result<Value> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Value::Str(s))
            }
            Tok::Num(_) | Tok::Minus => Ok(Value::Num(self.signed_number()?)),
            _ => self.unexpected("literal"),
        }
    }

    fn literal_list(&mut self) -> Result<Vec<Value>> {
        self.expect(Tok::LParen)?;
        let mut values = vec![self.literal()?];
        while self.eat(&Tok::Comma) {
            values.push(self.literal()?);
        }
        self.expect(Tok::RParen)?;
        Ok(values)
    }

    fn aggregate(&mut self) -> Result<Aggregate> {
        let agg = match self.peek() {
            Tok::Kw("COUNT") => Aggregate::Count,
            Tok::Kw("SUM") => Aggregate::Sum,
            Tok::Kw("AVG") => Aggregate::Avg,
            Tok::Ident(s) => return Err(self.unsupported(s.clone())),
            _ => return self.unexpected("COUNT, SUM or AVG"),
        };
        self.bump();
        Ok(agg)
    }

    fn unsupported(&self, name: String) -> Error {
        if matches!(self.peek_at(1), Tok::LParen) {
            Error::UnsupportedAggregate(name)
        } else {
            let (l, c) = self.here();
            syntax_error(l, c, format!("expected COUNT, SUM or AVG, found identifier `{name}`"))
        }
    }

    fn output(&mut self) -> Result<Output> {
        let agg = self.aggregate()?;
        self.expect(Tok::LParen)?;
        let target = if self.eat(&Tok::Star) {
            if agg != Aggregate::Count {
                self.pos -= 1;
                return self.err(format!("{agg}(*) is not allowed; only COUNT(*)"));
            }
            OutputTarget::Star
        } else if self.is_kw("PRE") {
            return self.err("outputs read post-update values; use POST(attribute)");
        } else {
            OutputTarget::Attr(self.post_attr()?)
        };
        self.expect(Tok::RParen)?;
        Ok(Output { agg, target })
    }

    fn update_clause(&mut self) -> Result<UpdateClause> {
        self.expect(Tok::LParen)?;
        let attr = self.ident()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Eq)?;
        let (l, c) = self.here();
        let e = self.expr()?;
        let is_self = |x: &Expr| matches!(x, Expr::Attr { side: Side::Pre, name } if *name == attr);
        let func = match &e {
            Expr::Num(x) => UpdateFn::set(Value::Num(*x)),
            Expr::Str(s) => UpdateFn::set(Value::Str(s.clone())),
            x if is_self(x) => UpdateFn::keep(),
            Expr::Bin { op: ArithOp::Mul, l: a, r: b } => match (a.as_ref(), b.as_ref()) {
                (Expr::Num(k), x) | (x, Expr::Num(k)) if is_self(x) => UpdateFn::scale(*k),
                _ => return Err(bad_update(l, c)),
            },
            Expr::Bin { op: ArithOp::Add, l: a, r: b } => match (a.as_ref(), b.as_ref()) {
                (Expr::Num(k), x) | (x, Expr::Num(k)) if is_self(x) => UpdateFn::shift(*k),
                _ => return Err(bad_update(l, c)),
            },
            Expr::Bin { op: ArithOp::Sub, l: a, r: b } => match (a.as_ref(), b.as_ref()) {
                (x, Expr::Num(k)) if is_self(x) => UpdateFn::shift(-*k),
                _ => return Err(bad_update(l, c)),
            },
            _ => return Err(bad_update(l, c)),
        };
        Ok(UpdateClause { attr, func })
    }

    fn use_spec(&mut self) -> Result<UseSpec> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let select = self.select()?;
            self.expect(Tok::RParen)?;
            return Ok(UseSpec::View { name: None, select });
        }
        let name = self.ident()?;
        if self.eat_kw("AS") {
            self.expect(Tok::LParen)?;
            let select = self.select()?;
            self.expect(Tok::RParen)?;
            return Ok(UseSpec::View { name: Some(name), select });
        }
        Ok(UseSpec::Relation(name))
    }

    fn colref(&mut self) -> Result<ColRef> {
        let first = self.ident()?;
        if self.eat(&Tok::Dot) {
            let name = self.ident()?;
            Ok(ColRef { qualifier: Some(first), name })
        } else {
            Ok(ColRef { qualifier: None, name: first })
        }
    }

    fn select(&mut self) -> Result<Select> {
        self.expect_kw("SELECT")?;
        let mut items = vec![self.select_item()?];
        while self.eat(&Tok::Comma) {
            items.push(self.select_item()?);
        }
        self.expect_kw("FROM")?;
        let mut from = vec![self.table_ref()?];
        while self.eat(&Tok::Comma) {
            from.push(self.table_ref()?);
        }
        let mut joins = Vec::new();
        if self.eat_kw("WHERE") {
            loop {
                let a = self.colref()?;
                self.expect(Tok::Eq)?;
                let b = self.colref()?;
                joins.push((a, b));
                if !self.eat_kw("AND") {
                    break;
                }
            }
        }
        let mut group_by = Vec::new();
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            group_by.push(self.colref()?);
            while self.eat(&Tok::Comma) {
                group_by.push(self.colref()?);
            }
        }
        Ok(Select { items, from, joins, group_by })
    }

    fn select_item(&mut self) -> Result<SelectItem> {
        if matches!(self.peek(), Tok::Kw("COUNT") | Tok::Kw("SUM") | Tok::Kw("AVG")) {
            let agg = self.aggregate()?;
            self.expect(Tok::LParen)?;
            let col = if self.eat(&Tok::Star) {
                if agg != Aggregate::Count {
                    self.pos -= 1;
                    return self.err(format!("{agg}(*) is not allowed; only COUNT(*)"));
                }
                None
            } else {
                Some(self.colref()?)
            };
            self.expect(Tok::RParen)?;
            let alias = if self.eat_kw("AS") { Some(self.ident()?) } else { None };
            return Ok(SelectItem::Agg { agg, col, alias });
        }
        let col = self.colref()?;
        let alias = if self.eat_kw("AS") { Some(self.ident()?) } else { None };
        Ok(SelectItem::Col { col, alias })
    }

    fn table_ref(&mut self) -> Result<FromItem> {
        let relation = self.ident()?;
        let alias = if self.eat_kw("AS") {
            Some(self.ident()?)
        } else if let Tok::Ident(_) = self.peek() {
            Some(self.ident()?)
        } else {
            None
        };
        Ok(FromItem { relation, alias })
    }

    pub fn pred(&mut self) -> Result<Pred> {
        let mut parts = vec![self.and_pred()?];
        while self.eat_kw("OR") {
            parts.push(self.and_pred()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Pred::Or(parts) })
    }

    fn and_pred(&mut self) -> Result<Pred> {
        let mut parts = vec![self.unary_pred()?];
        while self.is_kw("AND") && !matches!(self.peek_at(1), Tok::Kw("UPDATE")) {
            self.bump();
            parts.push(self.unary_pred()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Pred::And(parts) })
    }

    fn unary_pred(&mut self) -> Result<Pred> {
        if self.eat_kw("NOT") {
            return Ok(Pred::Not(Box::new(self.unary_pred()?)));
        }
        if *self.peek() == Tok::LParen {
            // Either a parenthesized predicate or an expression that starts with
            // a parenthesis; try the comparison reading first.
            let save = self.pos;
            match self.atom() {
                Ok(a) => return Ok(a),
                Err(Error::PostInWhen { line, col }) => return Err(Error::PostInWhen { line, col }),
                Err(_) => self.pos = save,
            }
            self.bump();
            let p = self.pred()?;
            self.expect(Tok::RParen)?;
            return Ok(p);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Pred> {
        let l = self.expr()?;
        let negated = self.is_kw("NOT") && matches!(self.peek_at(1), Tok::Kw("IN"));
        if negated {
            self.bump();
        }
        if self.eat_kw("IN") {
            let values = self.literal_list()?;
            return Ok(Pred::In { e: l, values, negated });
        }
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return self.unexpected("comparison operator"),
        };
        self.bump();
        let r = self.expr()?;
        Ok(Pred::Cmp { l, op, r })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(e),
            };
            self.bump();
            let r = self.term()?;
            e = Expr::Bin { op, l: Box::new(e), r: Box::new(r) };
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(e),
            };
            self.bump();
            let r = self.factor()?;
            e = Expr::Bin { op, l: Box::new(e), r: Box::new(r) };
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Num(x))
            }
            Tok::Minus => {
                self.bump();
                if let Tok::Num(x) = self.peek().clone() {
                    self.bump();
                    return Ok(Expr::Num(-x));
                }
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::Kw(k @ ("PRE" | "POST")) => {
                let (l, c) = self.here();
                if k == "POST" && self.in_when {
                    return Err(Error::PostInWhen { line: l, col: c });
                }
                self.bump();
                self.expect(Tok::LParen)?;
                let name = self.ident()?;
                self.expect(Tok::RParen)?;
                let side = if k == "PRE" { Side::Pre } else { Side::Post };
                Ok(Expr::Attr { side, name })
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr::Attr { side: Side::Pre, name })
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => self.unexpected("value, PRE(attribute) or POST(attribute)"),
        }
    }
}

fn bad_update(line: usize, col: usize) -> Error {
    syntax_error(
        line,
        col,
        "update must be a constant, PRE(attr), c * PRE(attr) or PRE(attr) + c for the updated attribute",
    )
}

pub fn update_kind_name(k: UpdateKind) -> &'static str {
    match k {
        UpdateKind::Set => "SET",
        UpdateKind::Scale => "SCALE",
        UpdateKind::Shift => "SHIFT",
        UpdateKind::Keep => "KEEP",
    }
}
