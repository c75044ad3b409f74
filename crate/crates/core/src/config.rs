//! JSON problem descriptions: mesh source, element pairing, material
//! parameters, closed-form data fields, solver knobs, and output options.
//! Closed-form fields are written as expression strings over x and y and
//! compiled into evaluable expression trees.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fespace::{FESpaceError, Pairing};
use crate::mesh::{Mesh, MeshError, Point};
use crate::mms::{self, Expr};
use crate::physics::{FluxParams, PhysicsError, StressParams};
use crate::solver::SolverConfig;
use crate::varexp::ScalarExponentLaw;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad expression `{0}`: {1}")]
    Expression(String, String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] FESpaceError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("unknown builtin mesh `{0}`")]
    UnknownMesh(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeshSource {
    Builtin {
        builtin: String,
        #[serde(default)]
        levels: usize,
    },
    File {
        path: String,
        #[serde(default)]
        levels: usize,
    },
}

impl Default for MeshSource {
    fn default() -> Self {
        MeshSource::Builtin { builtin: "unit_square".into(), levels: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ExponentSpec {
    Constant { value: f64 },
    Rational { a: f64, b: f64 },
    Table { points: Vec<(f64, f64)> },
}

impl ExponentSpec {
    pub fn law(&self) -> ScalarExponentLaw {
        match self {
            ExponentSpec::Constant { value } => {
                ScalarExponentLaw::Rational { a: *value, b: 0.0 }
            }
            ExponentSpec::Rational { a, b } => ScalarExponentLaw::Rational { a: *a, b: *b },
            ExponentSpec::Table { points } => ScalarExponentLaw::Table(points.clone()),
        }
    }
}

impl Default for ExponentSpec {
    fn default() -> Self {
        ExponentSpec::Constant { value: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StressSection {
    pub nu0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Default for StressSection {
    fn default() -> Self {
        StressSection { nu0: 1.0, kappa1: 1.0, kappa2: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub picard_tol: Option<f64>,
    pub max_picard: Option<usize>,
    pub outer_tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub newton_threshold: Option<f64>,
    pub max_damping: Option<usize>,
    pub quad_order: Option<usize>,
}

impl SolverSection {
    pub fn resolve(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            picard_tol: self.picard_tol.unwrap_or(d.picard_tol),
            max_picard: self.max_picard.unwrap_or(d.max_picard),
            outer_tol: self.outer_tol.unwrap_or(d.outer_tol),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            newton_threshold: self.newton_threshold.or(d.newton_threshold),
            max_damping: self.max_damping.unwrap_or(d.max_damping),
            quad_order: self.quad_order.unwrap_or(d.quad_order),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: String,
    #[serde(default)]
    pub matrix_market: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), matrix_market: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub mesh: MeshSource,
    #[serde(default = "default_pairing")]
    pub pairing: String,
    #[serde(default)]
    pub stress: StressSection,
    #[serde(default)]
    pub exponent: ExponentSpec,
    #[serde(default = "default_clamp")]
    pub clamp: (f64, f64),
    #[serde(default = "default_flux")]
    pub flux: FluxParams,
    /// Dirichlet velocity data as two expression strings in x, y
    #[serde(default)]
    pub velocity_data: Option<[String; 2]>,
    /// Dirichlet concentration data
    #[serde(default)]
    pub concentration_data: Option<String>,
    /// body force
    #[serde(default)]
    pub forcing: Option<[String; 2]>,
    /// optional source term for the transport equation
    #[serde(default)]
    pub concentration_source: Option<String>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_pairing() -> String {
    "p2p0".into()
}

fn default_clamp() -> (f64, f64) {
    (0.0, 1.0)
}

fn default_flux() -> FluxParams {
    FluxParams { k0: 1.0, k1: 0.0 }
}

impl Default for Config {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Config::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = serde_json::from_str(text)?;
        // compile eagerly so bad expressions fail at load time
        for expr in cfg
            .velocity_data
            .iter()
            .chain(cfg.forcing.iter())
            .flatten()
            .chain(cfg.concentration_data.iter())
            .chain(cfg.concentration_source.iter())
        {
            parse_expression(expr)?;
        }
        Ok(cfg)
    }

    pub fn build_mesh(&self) -> Result<Mesh, ConfigError> {
        let (mut mesh, levels) = match &self.mesh {
            MeshSource::Builtin { builtin, levels } => (
                Mesh::builtin(builtin).ok_or_else(|| ConfigError::UnknownMesh(builtin.clone()))?,
                *levels,
            ),
            MeshSource::File { path, levels } => (Mesh::load(path)?, *levels),
        };
        for _ in 0..levels {
            mesh = mesh.refine_uniform();
        }
        Ok(mesh)
    }

    pub fn pairing(&self) -> Result<Pairing, ConfigError> {
        Ok(Pairing::parse(&self.pairing)?)
    }

    pub fn stress_params(&self) -> Result<StressParams, ConfigError> {
        Ok(StressParams::power_law(
            self.stress.nu0,
            self.stress.kappa1,
            self.stress.kappa2,
            self.exponent.law(),
            self.clamp,
        )?)
    }

    pub fn flux_params(&self) -> Result<FluxParams, ConfigError> {
        Ok(FluxParams::new(self.flux.k0, self.flux.k1)?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.resolve()
    }

    pub fn velocity_field(&self) -> Result<Option<VectorField>, ConfigError> {
        self.velocity_data.as_ref().map(VectorField::compile).transpose()
    }

    pub fn forcing_field(&self) -> Result<Option<VectorField>, ConfigError> {
        self.forcing.as_ref().map(VectorField::compile).transpose()
    }

    pub fn concentration_field(&self) -> Result<Option<ScalarField>, ConfigError> {
        self.concentration_data.as_ref().map(|s| ScalarField::compile(s)).transpose()
    }

    pub fn concentration_source_field(&self) -> Result<Option<ScalarField>, ConfigError> {
        self.concentration_source.as_ref().map(|s| ScalarField::compile(s)).transpose()
    }
}

/// Compiled scalar expression in x, y.
#[derive(Clone)]
pub struct ScalarField(Arc<Expr>);

impl ScalarField {
    pub fn compile(text: &str) -> Result<ScalarField, ConfigError> {
        Ok(ScalarField(parse_expression(text)?))
    }

    pub fn at(&self, p: Point) -> f64 {
        self.0.eval(p)
    }
}

/// Compiled two-component expression in x, y.
#[derive(Clone)]
pub struct VectorField([Arc<Expr>; 2]);

impl VectorField {
    pub fn compile(text: &[String; 2]) -> Result<VectorField, ConfigError> {
        Ok(VectorField([parse_expression(&text[0])?, parse_expression(&text[1])?]))
    }

    pub fn at(&self, p: Point) -> [f64; 2] {
        [self.0[0].eval(p), self.0[1].eval(p)]
    }
}

/// Parse an arithmetic expression over x, y with + - * / ^, parentheses,
/// the constants pi and e, and the functions sin, cos, ln, exp, sqrt.
pub fn parse_expression(text: &str) -> Result<Arc<Expr>, ConfigError> {
    let tokens = tokenize(text)
        .map_err(|e| ConfigError::Expression(text.to_string(), e))?;
    let mut p = Parser { tokens, pos: 0 };
    let expr = p
        .expr()
        .map_err(|e| ConfigError::Expression(text.to_string(), e))?;
    if p.pos != p.tokens.len() {
        return Err(ConfigError::Expression(
            text.to_string(),
            format!("unexpected trailing input at token {}", p.pos),
        ));
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        match ch {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Token::Num(s.parse().map_err(|_| format!("bad number `{s}`"))?));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character `{other}`")),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Arc<Expr>, String> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = mms::add(&lhs, &rhs);
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = mms::sub(&lhs, &rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Arc<Expr>, String> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = mms::mul(&lhs, &rhs);
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = mms::div(&lhs, &rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Arc<Expr>, String> {
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(mms::neg(&inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Arc<Expr>, String> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            // right associative; unary minus binds looser than ^
            let exp = self.unary()?;
            return Ok(mms::pow(&base, &exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Arc<Expr>, String> {
        match self.next() {
            Some(Token::Num(v)) => Ok(mms::c(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                if self.next() != Some(Token::RParen) {
                    return Err("missing `)`".into());
                }
                Ok(inner)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(mms::x()),
                "y" => Ok(mms::y()),
                "pi" => Ok(mms::c(std::f64::consts::PI)),
                "e" => Ok(mms::c(std::f64::consts::E)),
                "sin" | "cos" | "ln" | "exp" | "sqrt" => {
                    if self.next() != Some(Token::LParen) {
                        return Err(format!("`{name}` needs parentheses"));
                    }
                    let arg = self.expr()?;
                    if self.next() != Some(Token::RParen) {
                        return Err("missing `)`".into());
                    }
                    Ok(match name.as_str() {
                        "sin" => mms::sin(&arg),
                        "cos" => mms::cos(&arg),
                        "ln" => mms::ln(&arg),
                        "exp" => mms::pow(&mms::c(std::f64::consts::E), &arg),
                        _ => mms::pow(&arg, &mms::c(0.5)),
                    })
                }
                other => Err(format!("unknown identifier `{other}`")),
            },
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}
