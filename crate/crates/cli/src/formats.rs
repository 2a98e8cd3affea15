//! On-disk formats: polynomial and experiment configs (JSON), the
//! line-oriented tree format, and report emission (JSON, CSV).
//!
//! Exact rationals travel as `"num/den"` strings (plain integers allowed) so
//! that round-trips are lossless.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use wickamp_core::amp::OnsagerMode;
use wickamp_core::poly::{Polynomial, ScaledPolynomial};
use wickamp_core::rational::{rat_int, Rational};
use wickamp_core::spiked::{ColoredTree, EdgeColor};
use wickamp_core::trees::{LabeledTree, UnlabeledTree};
use wickamp_core::Int;

use crate::sim::{AmpConfig, Ensemble, InitKind};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad rational `{0}`")]
    BadRational(String),
    #[error("tree syntax error at byte {at}: {msg}")]
    TreeSyntax { at: usize, msg: String },
    #[error("{0}")]
    BadValue(String),
}

/// Parses `"p/q"`, `"p"`, or an integer-valued literal.
pub fn parse_rational(text: &str) -> Result<Rational, FormatError> {
    let t = text.trim();
    let bad = || FormatError::BadRational(t.to_string());
    if let Some((num, den)) = t.split_once('/') {
        let n = Int::from_str(num.trim()).map_err(|_| bad())?;
        let d = Int::from_str(den.trim()).map_err(|_| bad())?;
        if d == Int::from(0) {
            return Err(bad());
        }
        Ok(Rational::new(n, d))
    } else {
        Ok(Rational::from_integer(Int::from_str(t).map_err(|_| bad())?))
    }
}

pub fn rational_string(r: &Rational) -> String {
    if r.denom() == &Int::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Serde shim for exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatStr(pub Rational);

impl Serialize for RatStr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rational_string(&self.0))
    }
}

impl<'de> Deserialize<'de> for RatStr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        let raw = Raw::deserialize(d)?;
        let r = match raw {
            Raw::Int(i) => rat_int(i),
            Raw::Text(t) => parse_rational(&t).map_err(D::Error::custom)?,
        };
        Ok(RatStr(r))
    }
}

/// A polynomial in a config file: either a bare coefficient array (lowest
/// degree first) or an object with an optional variance normalization
/// request (`f / sqrt(E[f(Z)^2])`, taken at unit variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolySpec {
    Coeffs(Vec<RatStr>),
    Full {
        coeffs: Vec<RatStr>,
        #[serde(default)]
        normalize_variance: bool,
    },
}

impl PolySpec {
    pub fn to_scaled(&self) -> Result<ScaledPolynomial, FormatError> {
        let (coeffs, normalize) = match self {
            PolySpec::Coeffs(c) => (c, false),
            PolySpec::Full { coeffs, normalize_variance } => (coeffs, *normalize_variance),
        };
        let p = Polynomial::new(coeffs.iter().map(|r| r.0.clone()).collect());
        if normalize {
            ScaledPolynomial::normalize_variance(p, &rat_int(1)).ok_or_else(|| {
                FormatError::BadValue("cannot normalize the zero polynomial".into())
            })
        } else {
            Ok(p.into())
        }
    }

    pub fn to_polynomial(&self) -> Result<Polynomial, FormatError> {
        match self {
            PolySpec::Coeffs(c) | PolySpec::Full { coeffs: c, normalize_variance: false } => {
                Ok(Polynomial::new(c.iter().map(|r| r.0.clone()).collect()))
            }
            _ => Err(FormatError::BadValue(
                "a normalized polynomial is irrational; this command needs exact coefficients"
                    .into(),
            )),
        }
    }
}

/// Loads a polynomial list from a JSON file holding either an array of
/// polynomial specs or `{"f": [...]}`.
pub fn parse_poly_file(text: &str) -> Result<Vec<PolySpec>, anyhow::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<PolySpec>),
        Wrapped { f: Vec<PolySpec> },
    }
    Ok(match serde_json::from_str(text)? {
        Raw::List(v) => v,
        Raw::Wrapped { f } => f,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    AllOnes,
    SubGaussianIid { tau0_sq: RatStr },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum OnsagerSpec {
    PaperExact,
    MeanField,
    Disabled,
}

impl From<OnsagerSpec> for OnsagerMode {
    fn from(o: OnsagerSpec) -> Self {
        match o {
            OnsagerSpec::PaperExact => OnsagerMode::PaperExact,
            OnsagerSpec::MeanField => OnsagerMode::MeanField,
            OnsagerSpec::Disabled => OnsagerMode::Disabled,
        }
    }
}

fn default_trials() -> usize {
    1
}

fn default_tol_abs() -> f64 {
    0.05
}

fn default_z() -> f64 {
    3.0
}

fn default_init() -> InitSpec {
    InitSpec::AllOnes
}

fn default_onsager() -> OnsagerSpec {
    OnsagerSpec::PaperExact
}

/// The experiment configuration as written in JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConfigFile {
    pub n: usize,
    pub t_max: usize,
    pub f: Vec<PolySpec>,
    pub ensemble: Ensemble,
    #[serde(default = "default_init")]
    pub init: InitSpec,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_onsager")]
    pub onsager: OnsagerSpec,
    #[serde(default = "default_tol_abs")]
    pub tol_abs: f64,
    #[serde(default = "default_z")]
    pub z_score: f64,
}

impl ConfigFile {
    pub fn to_amp_config(&self) -> Result<AmpConfig, FormatError> {
        let f = self.f.iter().map(PolySpec::to_scaled).collect::<Result<Vec<_>, _>>()?;
        Ok(AmpConfig {
            n: self.n,
            t_max: self.t_max,
            f,
            ensemble: self.ensemble,
            init: match &self.init {
                InitSpec::AllOnes => InitKind::AllOnes,
                InitSpec::SubGaussianIid { tau0_sq } => {
                    InitKind::SubGaussianIid { tau0_sq: tau0_sq.0.clone() }
                }
            },
            seed: self.seed,
            trials: self.trials,
            onsager: self.onsager.into(),
            tol_abs: self.tol_abs,
            z_score: self.z_score,
        })
    }
}

/// A parsed tree file: the shape always, labels and edge colors when every
/// non-root vertex carries them.
#[derive(Debug, Clone)]
pub struct ParsedTree {
    pub tree: UnlabeledTree,
    labels: Vec<Option<usize>>,
    colors: Vec<Option<EdgeColor>>,
}

impl ParsedTree {
    pub fn labeled(&self) -> Result<LabeledTree, FormatError> {
        let labels: Option<Vec<usize>> = self.labels.iter().copied().collect();
        let labels = labels.ok_or_else(|| {
            FormatError::BadValue("every vertex needs a label= attribute (or i= on the root)".into())
        })?;
        LabeledTree::new(self.tree.clone(), labels)
            .map_err(|e| FormatError::BadValue(e.to_string()))
    }

    pub fn colored(&self) -> Result<ColoredTree, FormatError> {
        if self.colors.iter().skip(1).any(Option::is_none) {
            return Err(FormatError::BadValue(
                "every edge needs a color=b|y attribute on its child vertex".into(),
            ));
        }
        Ok(ColoredTree::new(self.tree.clone(), self.colors.clone()))
    }
}

/// Parses the nested-parenthesis tree format, e.g.
/// `(root i=0 (c=1 label=1 (c=1 label=2)))` with optional `color=b|y` per
/// non-root vertex.
pub fn parse_tree(text: &str) -> Result<ParsedTree, FormatError> {
    let mut tokens = tokenize(text)?;
    tokens.reverse(); // pop from the back
    let mut tree = UnlabeledTree::root();
    let mut labels = vec![None];
    let mut colors = vec![None];

    fn expect(tokens: &mut Vec<(usize, Token)>, want: &Token) -> Result<usize, FormatError> {
        match tokens.pop() {
            Some((at, t)) if &t == want => Ok(at),
            Some((at, t)) => Err(FormatError::TreeSyntax {
                at,
                msg: format!("expected {want:?}, found {t:?}"),
            }),
            None => Err(FormatError::TreeSyntax { at: 0, msg: "unexpected end".into() }),
        }
    }

    fn parse_node(
        tokens: &mut Vec<(usize, Token)>,
        tree: &mut UnlabeledTree,
        labels: &mut Vec<Option<usize>>,
        colors: &mut Vec<Option<EdgeColor>>,
        node: usize,
        is_root: bool,
    ) -> Result<(), FormatError> {
        // attributes until a child '(' or the closing ')'
        loop {
            match tokens.last() {
                Some((_, Token::Open)) => {
                    tokens.pop();
                    let child = tree.add_child(node, rat_int(1));
                    labels.push(None);
                    colors.push(None);
                    parse_node(tokens, tree, labels, colors, child, false)?;
                }
                Some((_, Token::Close)) => {
                    tokens.pop();
                    return Ok(());
                }
                Some(&(at, Token::Atom(_))) => {
                    let atom = match tokens.pop() {
                        Some((_, Token::Atom(a))) => a,
                        _ => unreachable!(),
                    };
                    if is_root && atom == "root" {
                        continue;
                    }
                    let (key, value) = atom.split_once('=').ok_or(FormatError::TreeSyntax {
                        at,
                        msg: format!("expected key=value, found `{atom}`"),
                    })?;
                    match key {
                        "c" => tree.set_coeff(node, parse_rational(value)?),
                        "label" | "i" => {
                            let l: usize =
                                value.parse().map_err(|_| FormatError::TreeSyntax {
                                    at,
                                    msg: format!("bad label `{value}`"),
                                })?;
                            labels[node] = Some(l);
                            if node == 0 {
                                tree.set_root_label(Some(l));
                            }
                        }
                        "color" if !is_root => {
                            colors[node] = Some(match value {
                                "b" | "blue" => EdgeColor::Blue,
                                "y" | "yellow" => EdgeColor::Yellow,
                                _ => {
                                    return Err(FormatError::TreeSyntax {
                                        at,
                                        msg: format!("bad color `{value}`"),
                                    })
                                }
                            });
                        }
                        _ => {
                            return Err(FormatError::TreeSyntax {
                                at,
                                msg: format!("unknown attribute `{key}`"),
                            })
                        }
                    }
                }
                None => {
                    return Err(FormatError::TreeSyntax { at: 0, msg: "unexpected end".into() })
                }
            }
        }
    }

    expect(&mut tokens, &Token::Open)?;
    parse_node(&mut tokens, &mut tree, &mut labels, &mut colors, 0, true)?;
    if let Some((at, t)) = tokens.pop() {
        return Err(FormatError::TreeSyntax { at, msg: format!("trailing {t:?}") });
    }
    Ok(ParsedTree { tree, labels, colors })
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, FormatError> {
    let mut out = Vec::new();
    let mut atom_start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch == '(' || ch == ')' || ch.is_whitespace() {
            if let Some(s) = atom_start.take() {
                out.push((s, Token::Atom(text[s..i].to_string())));
            }
            if ch == '(' {
                out.push((i, Token::Open));
            } else if ch == ')' {
                out.push((i, Token::Close));
            }
        } else if atom_start.is_none() {
            atom_start = Some(i);
        }
    }
    if let Some(s) = atom_start {
        out.push((s, Token::Atom(text[s..].to_string())));
    }
    Ok(out)
}

/// Writes a tree back in the parenthesis format.
pub fn tree_to_string(
    tree: &UnlabeledTree,
    labels: Option<&[usize]>,
    colors: Option<&[Option<EdgeColor>]>,
) -> String {
    fn write_node(
        out: &mut String,
        tree: &UnlabeledTree,
        labels: Option<&[usize]>,
        colors: Option<&[Option<EdgeColor>]>,
        node: usize,
    ) {
        out.push('(');
        if node == 0 {
            out.push_str("root");
            if let Some(l) = labels.map(|l| l[0]).or(tree.root_label()) {
                let _ = write!(out, " i={l}");
            }
        } else {
            let _ = write!(out, "c={}", rational_string(tree.coeff(node)));
            if let Some(ls) = labels {
                let _ = write!(out, " label={}", ls[node]);
            }
            if let Some(cs) = colors {
                if let Some(c) = cs[node] {
                    let _ = write!(
                        out,
                        " color={}",
                        match c {
                            EdgeColor::Blue => "b",
                            EdgeColor::Yellow => "y",
                        }
                    );
                }
            }
        }
        for &c in tree.children(node) {
            out.push(' ');
            write_node(out, tree, labels, colors, c);
        }
        out.push(')');
    }
    let mut out = String::new();
    write_node(&mut out, tree, labels, colors, 0);
    out
}

/// CSV export of a report: one row per `(t, m)`.
pub fn report_csv(report: &crate::sim::ExperimentReport) -> String {
    let mut out = String::from("t,m,empirical,stderr,predicted,abs_error,pass\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t, r.m, r.empirical, r.stderr, r.predicted_f64, r.abs_error, r.pass
        );
    }
    out
}
