use std::collections::HashSet;

use super::lexer::{lex, Tok, Token};
use super::{
    Branch, CypherError, Expr, MatchClause, NodePattern, PatternChain, QueryPlan, RelDirection,
    RelPattern, Return, ReturnItem,
};

const UNSUPPORTED_CLAUSES: &[&str] = &[
    "CREATE", "MERGE", "DELETE", "DETACH", "SET", "REMOVE", "WITH", "UNWIND", "CALL", "FOREACH",
    "LOAD", "WHERE", "ORDER", "SKIP", "LIMIT",
];
const AGGREGATES: &[&str] = &["count", "collect", "sum", "avg", "min", "max"];

struct Parser {
    toks: Vec<Token>,
    at: usize,
    anon: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.at + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at < self.toks.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, CypherError> {
        Err(CypherError::SyntaxError {
            position: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn is_punct(&self, c: char) -> bool {
        *self.peek() == Tok::Punct(c)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), CypherError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            self.error(&[&format!("`{c}`")])
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, CypherError> {
        match self.peek().clone() {
            Tok::Ident(w) => {
                self.bump();
                Ok(w)
            }
            _ => self.error(&[what]),
        }
    }

    fn check_unsupported(&self) -> Result<(), CypherError> {
        if let Tok::Ident(w) = self.peek() {
            let upper = w.to_ascii_uppercase();
            if UNSUPPORTED_CLAUSES.contains(&upper.as_str()) {
                return Err(CypherError::UnsupportedConstruct(upper));
            }
        }
        if self.is_punct('$') {
            return Err(CypherError::UnsupportedConstruct("parameters".into()));
        }
        Ok(())
    }

    fn query(&mut self) -> Result<QueryPlan, CypherError> {
        let mut branches = vec![self.branch()?];
        let mut union_all = Vec::new();
        while self.eat_kw("UNION") {
            union_all.push(self.eat_kw("ALL"));
            branches.push(self.branch()?);
        }
        self.eat_punct(';');
        self.check_unsupported()?;
        if *self.peek() != Tok::Eof {
            return self.error(&["UNION", "end of input"]);
        }
        Ok(QueryPlan { branches, union_all })
    }

    fn branch(&mut self) -> Result<Branch, CypherError> {
        self.anon = 0;
        let mut clauses = Vec::new();
        loop {
            self.check_unsupported()?;
            let optional = self.eat_kw("OPTIONAL");
            if optional || self.is_kw("MATCH") {
                if !self.eat_kw("MATCH") {
                    return self.error(&["MATCH"]);
                }
                clauses.push(self.match_clause(optional)?);
            } else {
                break;
            }
        }
        if clauses.is_empty() {
            return self.error(&["MATCH", "OPTIONAL MATCH"]);
        }
        if !self.eat_kw("RETURN") {
            self.check_unsupported()?;
            return self.error(&["MATCH", "OPTIONAL MATCH", "RETURN", "`,`"]);
        }
        let ret = self.return_clause()?;
        let branch = Branch { clauses, ret };
        validate_branch(&branch)?;
        Ok(branch)
    }

    fn match_clause(&mut self, optional: bool) -> Result<MatchClause, CypherError> {
        let mut patterns = vec![self.pattern()?];
        while self.eat_punct(',') {
            patterns.push(self.pattern()?);
        }
        self.check_unsupported()?;
        Ok(MatchClause { optional, patterns })
    }

    fn pattern(&mut self) -> Result<PatternChain, CypherError> {
        if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Punct('=') {
            return Err(CypherError::UnsupportedConstruct("path variables".into()));
        }
        let start = self.node()?;
        let mut steps = Vec::new();
        while self.is_punct('-') || self.is_punct('<') {
            let rel = self.relationship()?;
            steps.push((rel, self.node()?));
        }
        Ok(PatternChain { start, steps })
    }

    fn node(&mut self) -> Result<NodePattern, CypherError> {
        self.expect_punct('(')?;
        let var = match self.peek().clone() {
            Tok::Ident(w) => {
                self.bump();
                w
            }
            _ => {
                self.anon += 1;
                format!(" anon{}", self.anon)
            }
        };
        let mut labels = Vec::new();
        while self.eat_punct(':') {
            labels.push(self.ident("label")?);
        }
        let props = if self.is_punct('{') { self.props()? } else { Vec::new() };
        if !self.eat_punct(')') {
            return self.error(&["`:`", "`{`", "`)`"]);
        }
        Ok(NodePattern { var, labels, props })
    }

    fn props(&mut self) -> Result<Vec<(String, String)>, CypherError> {
        self.expect_punct('{')?;
        let mut props = Vec::new();
        if self.eat_punct('}') {
            return Ok(props);
        }
        loop {
            let key = self.ident("property name")?;
            self.expect_punct(':')?;
            let value = match self.peek().clone() {
                Tok::Str(s) | Tok::Number(s) => {
                    self.bump();
                    s
                }
                Tok::Punct('$') => return Err(CypherError::UnsupportedConstruct("parameters".into())),
                _ => return self.error(&["string literal"]),
            };
            props.push((key, value));
            if self.eat_punct('}') {
                return Ok(props);
            }
            if !self.eat_punct(',') {
                return self.error(&["`,`", "`}`"]);
            }
        }
    }

    fn relationship(&mut self) -> Result<RelPattern, CypherError> {
        let incoming = self.eat_punct('<');
        self.expect_punct('-')?;
        let kinds = if self.is_punct('[') { self.rel_body()? } else { Vec::new() };
        self.expect_punct('-')?;
        let outgoing = self.eat_punct('>');
        let direction = match (incoming, outgoing) {
            (true, true) => return Err(CypherError::UnsupportedConstruct("bidirectional arrow".into())),
            (true, false) => RelDirection::In,
            (false, true) => RelDirection::Out,
            (false, false) => RelDirection::Either,
        };
        Ok(RelPattern { kinds, direction })
    }

    fn rel_body(&mut self) -> Result<Vec<String>, CypherError> {
        self.expect_punct('[')?;
        if matches!(self.peek(), Tok::Ident(_)) {
            return Err(CypherError::UnsupportedConstruct("relationship variables".into()));
        }
        let mut kinds = Vec::new();
        if self.eat_punct(':') {
            kinds.push(self.ident("relationship type")?);
            while self.eat_punct('|') {
                self.eat_punct(':');
                kinds.push(self.ident("relationship type")?);
            }
        }
        if self.is_punct('*') {
            return Err(CypherError::UnsupportedConstruct("variable-length paths".into()));
        }
        if self.is_punct('{') {
            return Err(CypherError::UnsupportedConstruct("relationship properties".into()));
        }
        if !self.eat_punct(']') {
            return self.error(&["`:`", "`|`", "`]`"]);
        }
        Ok(kinds)
    }

    fn return_clause(&mut self) -> Result<Return, CypherError> {
        let distinct = self.eat_kw("DISTINCT");
        let mut items = vec![self.return_item()?];
        while self.eat_punct(',') {
            items.push(self.return_item()?);
        }
        Ok(Return { distinct, items })
    }

    fn return_item(&mut self) -> Result<ReturnItem, CypherError> {
        if self.is_punct('*') {
            return Err(CypherError::UnsupportedConstruct("RETURN *".into()));
        }
        let head = self.ident("variable")?;
        let expr = if self.eat_punct('(') {
            let lower = head.to_ascii_lowercase();
            if AGGREGATES.contains(&lower.as_str()) {
                return Err(CypherError::UnsupportedConstruct(format!("aggregation {head}()")));
            }
            if lower != "labels" {
                return Err(CypherError::UnsupportedConstruct(format!("function {head}()")));
            }
            let v = self.ident("variable")?;
            self.expect_punct(')')?;
            Expr::Labels(v)
        } else if self.eat_punct('.') {
            Expr::Prop(head, self.ident("property name")?)
        } else {
            Expr::Var(head)
        };
        let alias = if self.eat_kw("AS") {
            Some(self.ident("alias")?)
        } else {
            None
        };
        Ok(ReturnItem { expr, alias })
    }
}

fn validate_branch(b: &Branch) -> Result<(), CypherError> {
    let bound: HashSet<&str> = b
        .clauses
        .iter()
        .flat_map(|c| c.patterns.iter())
        .flat_map(|p| p.nodes())
        .map(|n| n.var.as_str())
        .collect();
    for item in &b.ret.items {
        if !bound.contains(item.expr.var()) {
            return Err(CypherError::UnboundVariable(item.expr.var().to_string()));
        }
    }
    Ok(())
}

/// Parse a query of the supported subset.
pub fn parse_cypher(text: &str) -> Result<QueryPlan, CypherError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        anon: 0,
    };
    let plan = p.query()?;
    if plan.union_all.len() > 1 && plan.union_all.iter().any(|a| *a != plan.union_all[0]) {
        return Err(CypherError::UnsupportedConstruct("mixing UNION and UNION ALL".into()));
    }
    let first: Vec<String> = plan.branches[0].ret.items.iter().map(|i| i.column()).collect();
    for b in &plan.branches[1..] {
        let cols: Vec<String> = b.ret.items.iter().map(|i| i.column()).collect();
        if cols != first {
            return Err(CypherError::UnionColumnMismatch(first, cols));
        }
    }
    Ok(plan)
}
