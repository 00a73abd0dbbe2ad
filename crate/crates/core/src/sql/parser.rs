//! Recursive-descent parser. Grammar (keywords case-insensitive):
//!
//! ```text
//! query      := SELECT items FROM table_ref join* [WHERE conjunct (AND conjunct)*]
//!               [GROUP BY column (, column)*] [;]
//! items      := '*' | item (, item)*
//! item       := expr [[AS] ident]
//! table_ref  := ident [[AS] ident]
//! join       := [INNER] JOIN table_ref ON column eq column
//! conjunct   := operand [cmp operand]
//! cmp        := = | == | != | <> | < | <= | > | >=
//! operand    := literal | column | llm | AVG '(' operand ')' | similarity | '(' conjunct ')'
//! llm        := LLM '(' string (, operand)* ')' [returning]
//! returning  := RETURNING ( TEXT | INT BETWEEN int AND int
//!                         | CHOICE '(' string (, string)* ')'
//!                         | RECORD '(' ident type (, ident type)* ')' )
//! similarity := SIMILARITY_SEARCH '(' operand [, int] ')'
//!             | VectorDB '.' similarity_search '(' operand [, int] ')'
//! column     := ident [. ident]
//! ```

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SqlError;

const UNSUPPORTED: &[(&str, &str)] = &[
    ("or", "OR"),
    ("not", "NOT"),
    ("left", "outer joins"),
    ("right", "outer joins"),
    ("full", "outer joins"),
    ("outer", "outer joins"),
    ("cross", "cross joins"),
    ("order", "ORDER BY"),
    ("limit", "LIMIT"),
    ("having", "HAVING"),
    ("union", "set operations"),
    ("in", "IN lists and subqueries"),
    ("exists", "subqueries"),
    ("with", "common table expressions"),
    ("case", "CASE expressions"),
    ("distinct", "DISTINCT"),
    ("count", "aggregates other than AVG"),
    ("sum", "aggregates other than AVG"),
    ("min", "aggregates other than AVG"),
    ("max", "aggregates other than AVG"),
];

/// Parses one query.
pub fn parse(sql: &str) -> Result<QueryAst, SqlError> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens, pos: 0 };
    let q = p.query()?;
    if p.peek_tok() == &Tok::Semicolon {
        p.pos += 1;
    }
    match p.peek_tok() {
        Tok::Eof => Ok(q),
        _ => Err(p.unexpected("end of query")),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_tok(&self) -> &Tok {
        &self.peek().tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.tokens[(self.pos + n).min(self.tokens.len() - 1)].tok
    }

    fn unexpected(&self, expected: &str) -> SqlError {
        let t = self.peek();
        if let Tok::Ident { text, quoted: false } = &t.tok {
            if let Some((_, feature)) = UNSUPPORTED.iter().find(|(k, _)| k == text) {
                return SqlError::Unsupported {
                    line: t.line,
                    column: t.column,
                    token: text.clone(),
                    feature: (*feature).to_string(),
                };
            }
        }
        SqlError::syntax(t.line, t.column, expected, &t.tok.describe())
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek_tok(), Tok::Ident { text, quoted: false } if text == kw)
    }

    fn kw_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Tok::Ident { text, quoted: false } if text == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&kw.to_uppercase()))
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SqlError> {
        if *self.peek_tok() == tok {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<String, SqlError> {
        match self.peek_tok().clone() {
            Tok::Ident { text, quoted: true } => {
                self.pos += 1;
                Ok(text)
            }
            Tok::Ident { text, quoted: false } if !is_keyword(&text) => {
                self.pos += 1;
                Ok(text)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn at_plain_ident(&self) -> bool {
        match self.peek_tok() {
            Tok::Ident { quoted: true, .. } => true,
            Tok::Ident { text, quoted: false } => !is_keyword(text),
            _ => false,
        }
    }

    fn string(&mut self) -> Result<String, SqlError> {
        match self.peek_tok().clone() {
            Tok::Str(s) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("string literal")),
        }
    }

    fn int(&mut self) -> Result<i64, SqlError> {
        match self.peek_tok().clone() {
            Tok::Int(i) => {
                self.pos += 1;
                Ok(i)
            }
            _ => Err(self.unexpected("integer literal")),
        }
    }

    fn query(&mut self) -> Result<QueryAst, SqlError> {
        self.expect_kw("select")?;
        let select = self.select_items()?;
        self.expect_kw("from")?;
        let from = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            if self.is_kw("inner") && self.kw_at(1, "join") {
                self.pos += 2;
            } else if !self.eat_kw("join") {
                break;
            }
            let table = self.table_ref()?;
            self.expect_kw("on")?;
            let left = self.column()?;
            match self.peek_tok() {
                Tok::Op("=") | Tok::Op("==") => self.pos += 1,
                _ => return Err(self.unexpected("equality in join condition")),
            }
            let right = self.column()?;
            joins.push(JoinClause { table, left, right });
        }
        let mut where_conjuncts = Vec::new();
        if self.eat_kw("where") {
            where_conjuncts.push(self.conjunct()?);
            while self.eat_kw("and") {
                where_conjuncts.push(self.conjunct()?);
            }
        }
        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            group_by.push(self.column()?);
            while *self.peek_tok() == Tok::Comma {
                self.pos += 1;
                group_by.push(self.column()?);
            }
        }
        Ok(QueryAst { select, from, joins, where_conjuncts, group_by })
    }

    fn select_items(&mut self) -> Result<Vec<SelectItem>, SqlError> {
        if *self.peek_tok() == Tok::Star {
            self.pos += 1;
            return Ok(vec![SelectItem::Wildcard]);
        }
        let mut items = Vec::new();
        loop {
            let expr = self.operand()?;
            let alias = self.alias()?;
            items.push(SelectItem::Expr { expr, alias });
            if *self.peek_tok() != Tok::Comma {
                break;
            }
            self.pos += 1;
        }
        Ok(items)
    }

    /// `AS name` or a bare name.
    fn alias(&mut self) -> Result<Option<String>, SqlError> {
        if self.eat_kw("as") || self.at_plain_ident() {
            Ok(Some(self.ident()?))
        } else {
            Ok(None)
        }
    }

    fn table_ref(&mut self) -> Result<TableRef, SqlError> {
        if *self.peek_tok() == Tok::LParen {
            let t = self.peek();
            return Err(SqlError::Unsupported {
                line: t.line,
                column: t.column,
                token: "(".into(),
                feature: "subqueries".into(),
            });
        }
        let name = self.ident()?;
        let alias = self.alias()?;
        Ok(TableRef { name, alias })
    }

    fn column(&mut self) -> Result<ColumnName, SqlError> {
        let first = self.ident()?;
        if *self.peek_tok() == Tok::Dot {
            self.pos += 1;
            let name = self.ident()?;
            Ok(ColumnName { qualifier: Some(first), name })
        } else {
            Ok(ColumnName { qualifier: None, name: first })
        }
    }

    fn conjunct(&mut self) -> Result<Expr, SqlError> {
        let left = self.operand()?;
        let op = match self.peek_tok() {
            Tok::Op("=") | Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") | Tok::Op("<>") => CmpOp::NotEq,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::LtEq,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::GtEq,
            _ => return Ok(left),
        };
        self.pos += 1;
        let right = self.operand()?;
        Ok(Expr::Compare { op, left: Box::new(left), right: Box::new(right) })
    }

    fn operand(&mut self) -> Result<Expr, SqlError> {
        let tok = self.peek_tok().clone();
        match tok {
            Tok::Str(s) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Str(s)))
            }
            Tok::Int(i) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Int(i)))
            }
            Tok::Float(f) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Float(f)))
            }
            Tok::LParen => {
                if self.kw_at(1, "select") {
                    let t = self.peek();
                    return Err(SqlError::Unsupported {
                        line: t.line,
                        column: t.column,
                        token: "(".into(),
                        feature: "subqueries".into(),
                    });
                }
                self.pos += 1;
                let e = self.conjunct()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident { text, quoted: false } => match text.as_str() {
                "true" => {
                    self.pos += 1;
                    Ok(Expr::Literal(Literal::Bool(true)))
                }
                "false" => {
                    self.pos += 1;
                    Ok(Expr::Literal(Literal::Bool(false)))
                }
                "null" => {
                    self.pos += 1;
                    Ok(Expr::Literal(Literal::Null))
                }
                "llm" if *self.peek_at(1) == Tok::LParen => self.llm_call(),
                "avg" if *self.peek_at(1) == Tok::LParen => {
                    self.pos += 2;
                    let inner = self.operand()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Avg(Box::new(inner)))
                }
                "similarity_search" if *self.peek_at(1) == Tok::LParen => {
                    self.pos += 1;
                    self.similarity_args()
                }
                "vectordb"
                    if *self.peek_at(1) == Tok::Dot
                        && self.kw_at(2, "similarity_search")
                        && *self.peek_at(3) == Tok::LParen =>
                {
                    self.pos += 3;
                    self.similarity_args()
                }
                _ => Ok(Expr::Column(self.column()?)),
            },
            Tok::Ident { .. } => Ok(Expr::Column(self.column()?)),
            _ => Err(self.unexpected("expression")),
        }
    }

    fn similarity_args(&mut self) -> Result<Expr, SqlError> {
        self.expect(Tok::LParen)?;
        let query = self.operand()?;
        let k = if *self.peek_tok() == Tok::Comma {
            self.pos += 1;
            let t = self.peek().clone();
            let k = self.int()?;
            if k <= 0 {
                return Err(SqlError::syntax(t.line, t.column, "positive k", &k.to_string()));
            }
            Some(k as u64)
        } else {
            None
        };
        self.expect(Tok::RParen)?;
        Ok(Expr::SimilaritySearch { query: Box::new(query), k })
    }

    fn llm_call(&mut self) -> Result<Expr, SqlError> {
        self.pos += 2;
        let template = self.string()?;
        let mut args = Vec::new();
        while *self.peek_tok() == Tok::Comma {
            self.pos += 1;
            args.push(self.operand()?);
        }
        self.expect(Tok::RParen)?;
        let returning = if self.eat_kw("returning") { Some(self.returning()?) } else { None };
        Ok(Expr::Llm(LlmCall { template, args, returning }))
    }

    fn returning(&mut self) -> Result<ReturningClause, SqlError> {
        if self.eat_kw("text") {
            return Ok(ReturningClause::Text);
        }
        if self.eat_kw("int") {
            self.expect_kw("between")?;
            let lo = self.int()?;
            self.expect_kw("and")?;
            let hi = self.int()?;
            return Ok(ReturningClause::IntBetween(lo, hi));
        }
        if self.eat_kw("choice") {
            self.expect(Tok::LParen)?;
            let mut items = vec![self.string()?];
            while *self.peek_tok() == Tok::Comma {
                self.pos += 1;
                items.push(self.string()?);
            }
            self.expect(Tok::RParen)?;
            return Ok(ReturningClause::Choice(items));
        }
        if self.eat_kw("record") {
            self.expect(Tok::LParen)?;
            let mut fields = Vec::new();
            loop {
                let name = self.ident()?;
                let ty = if self.eat_kw("text") {
                    FieldType::Text
                } else if self.eat_kw("int") {
                    FieldType::Int
                } else if self.eat_kw("float") {
                    FieldType::Float
                } else if self.eat_kw("bool") {
                    FieldType::Bool
                } else {
                    return Err(self.unexpected("field type (TEXT, INT, FLOAT, BOOL)"));
                };
                fields.push((name, ty));
                if *self.peek_tok() != Tok::Comma {
                    break;
                }
                self.pos += 1;
            }
            self.expect(Tok::RParen)?;
            return Ok(ReturningClause::Record(fields));
        }
        Err(self.unexpected("TEXT, INT, CHOICE or RECORD"))
    }
}
