//! Character n-gram language model with stupid backoff.
//!
//! Models are trained on raw text lines, score strings as the mean log10
//! probability per character, and persist to the ARPA text format. Two
//! models (a universal one and a domain one) can score jointly through
//! [`DualLm`].

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_BACKOFF_ALPHA: f64 = 0.4;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("training corpus has no tokens")]
    EmptyCorpus,
    #[error("cannot score empty text")]
    EmptyText,
    #[error("model has an empty vocabulary")]
    EmptyModel,
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("backoff alpha must be in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("ARPA parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Character n-gram model storing log10 conditional probabilities.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    backoff_alpha: f64,
    vocab: BTreeSet<char>,
    /// Key: the n-gram's characters concatenated; value: log10 P(last | rest).
    probs: HashMap<String, f64>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn backoff_alpha(&self) -> f64 {
        self.backoff_alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn with_backoff_alpha(mut self, alpha: f64) -> Result<Self, LmError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(LmError::BadAlpha(alpha));
        }
        self.backoff_alpha = alpha;
        Ok(self)
    }

    /// log10 P(token | context) under stupid backoff. The context is
    /// truncated to the last order-1 characters; each backoff step to a
    /// shorter context multiplies in `backoff_alpha`, and a token absent
    /// from the vocabulary bottoms out at alpha / (vocab size + 1).
    pub fn token_log10(&self, context: &[char], token: char) -> f64 {
        let max_ctx = context.len().min(self.order - 1);
        let mut penalty = 0.0;
        for k in (1..=max_ctx).rev() {
            let mut key = String::with_capacity((k + 1) * 4);
            key.extend(&context[context.len() - k..]);
            key.push(token);
            if let Some(&lp) = self.probs.get(&key) {
                return penalty + lp;
            }
            penalty += self.backoff_alpha.log10();
        }
        let mut key = String::new();
        key.push(token);
        match self.probs.get(&key) {
            Some(&lp) => penalty + lp,
            None => penalty + (self.backoff_alpha / (self.vocab.len() + 1) as f64).log10(),
        }
    }
}

fn tokenize(text: &str) -> Vec<char> {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Trains a model by maximum likelihood over all n-grams up to `order`.
/// N-grams never cross line boundaries and lines carry no start or end
/// markers: a line's first characters are scored with shorter contexts.
pub fn train_lm<I, S>(lines: I, order: usize) -> Result<NGramModel, LmError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if order == 0 {
        return Err(LmError::ZeroOrder);
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total_tokens = 0u64;
    let mut vocab = BTreeSet::new();
    for line in lines {
        let tokens = tokenize(line.as_ref());
        total_tokens += tokens.len() as u64;
        vocab.extend(tokens.iter().copied());
        for n in 1..=order {
            for window in tokens.windows(n) {
                *counts.entry(window.iter().collect()).or_insert(0) += 1;
            }
        }
    }
    if total_tokens == 0 {
        return Err(LmError::EmptyCorpus);
    }
    let mut probs = HashMap::with_capacity(counts.len());
    for (gram, &count) in &counts {
        let chars: Vec<char> = gram.chars().collect();
        let denom = if chars.len() == 1 {
            total_tokens
        } else {
            let prefix: String = chars[..chars.len() - 1].iter().collect();
            counts[&prefix]
        };
        probs.insert(gram.clone(), (count as f64 / denom as f64).log10());
    }
    Ok(NGramModel {
        order,
        backoff_alpha: DEFAULT_BACKOFF_ALPHA,
        vocab,
        probs,
    })
}

/// Per-character log10 probabilities for `text` (whitespace stripped).
pub fn token_scores(model: &NGramModel, text: &str) -> Result<Vec<f64>, LmError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(LmError::EmptyText);
    }
    Ok((0..tokens.len())
        .map(|i| model.token_log10(&tokens[..i], tokens[i]))
        .collect())
}

/// Mean log10 probability per character.
pub fn score_text(model: &NGramModel, text: &str) -> Result<f64, LmError> {
    let scores = token_scores(model, text)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct DualLmConfig {
    /// Weight of the domain model; the universal model gets 1 - lambda.
    pub lambda_domain: f64,
    /// Mix per-token log probabilities instead of probabilities.
    pub log_linear: bool,
}

impl Default for DualLmConfig {
    fn default() -> Self {
        Self {
            lambda_domain: 0.5,
            log_linear: false,
        }
    }
}

/// A universal and a domain model scoring together.
#[derive(Debug, Clone, Copy)]
pub struct DualLm<'a> {
    pub universal: &'a NGramModel,
    pub domain: &'a NGramModel,
    pub config: DualLmConfig,
}

impl<'a> DualLm<'a> {
    pub fn new(universal: &'a NGramModel, domain: &'a NGramModel, config: DualLmConfig) -> Self {
        Self {
            universal,
            domain,
            config,
        }
    }

    /// Mixed log10 P(token | context).
    pub fn token_log10(&self, context: &[char], token: char) -> f64 {
        let lu = self.universal.token_log10(context, token);
        let ld = self.domain.token_log10(context, token);
        let lambda = self.config.lambda_domain;
        if self.config.log_linear {
            (1.0 - lambda) * lu + lambda * ld
        } else {
            ((1.0 - lambda) * 10f64.powf(lu) + lambda * 10f64.powf(ld)).log10()
        }
    }

    /// Mixed log10 increment for appending a whole string to a prefix.
    pub fn extension_log10(&self, prefix: &[char], extension: &str) -> f64 {
        let mut context: Vec<char> = prefix.to_vec();
        let mut total = 0.0;
        for ch in extension.chars().filter(|c| !c.is_whitespace()) {
            total += self.token_log10(&context, ch);
            context.push(ch);
        }
        total
    }
}

/// Mean mixed log10 probability per character.
pub fn dual_score(
    universal: &NGramModel,
    domain: &NGramModel,
    config: DualLmConfig,
    text: &str,
) -> Result<f64, LmError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(LmError::EmptyText);
    }
    let dual = DualLm::new(universal, domain, config);
    let sum: f64 = (0..tokens.len())
        .map(|i| dual.token_log10(&tokens[..i], tokens[i]))
        .sum();
    Ok(sum / tokens.len() as f64)
}

/// Serializes a model to ARPA text. A `backoff_alpha` stat line in the
/// preamble (before `\data\`) records the backoff weight, which the ARPA
/// body has no slot for; standard tools ignore preamble text.
pub fn write_arpa(model: &NGramModel) -> Result<String, LmError> {
    if model.vocab.is_empty() || model.probs.is_empty() {
        return Err(LmError::EmptyModel);
    }
    let mut by_len: Vec<Vec<(&String, f64)>> = vec![Vec::new(); model.order];
    for (gram, &lp) in &model.probs {
        let n = gram.chars().count();
        by_len[n - 1].push((gram, lp));
    }
    for bucket in &mut by_len {
        bucket.sort_by(|a, b| a.0.cmp(b.0));
    }
    let mut out = String::new();
    out.push_str(&format!("backoff_alpha {}\n\n", model.backoff_alpha));
    out.push_str("\\data\\\n");
    for (i, bucket) in by_len.iter().enumerate() {
        out.push_str(&format!("ngram {}={}\n", i + 1, bucket.len()));
    }
    for (i, bucket) in by_len.iter().enumerate() {
        out.push_str(&format!("\n\\{}-grams:\n", i + 1));
        for (gram, lp) in bucket {
            let spaced: Vec<String> = gram.chars().map(|c| c.to_string()).collect();
            out.push_str(&format!("{}\t{}\n", lp, spaced.join(" ")));
        }
    }
    out.push_str("\n\\end\\\n");
    Ok(out)
}

/// Parses ARPA text produced by [`write_arpa`] or compatible tools.
pub fn read_arpa(text: &str) -> Result<NGramModel, LmError> {
    let err = |line: usize, msg: &str| LmError::Parse {
        line,
        msg: msg.to_string(),
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut alpha = DEFAULT_BACKOFF_ALPHA;
    let mut i = 0;
    while i < lines.len() && lines[i].trim() != "\\data\\" {
        let trimmed = lines[i].trim();
        if let Some(rest) = trimmed.strip_prefix("backoff_alpha ") {
            alpha = rest
                .trim()
                .parse::<f64>()
                .map_err(|e| err(i + 1, &format!("bad backoff_alpha: {e}")))?;
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(err(i + 1, "backoff_alpha out of range"));
            }
        }
        i += 1;
    }
    if i == lines.len() {
        return Err(err(lines.len(), "missing \\data\\ header"));
    }
    i += 1;
    let mut declared: Vec<usize> = Vec::new();
    while i < lines.len() {
        let trimmed = lines[i].trim();
        if trimmed.is_empty() {
            i += 1;
            continue;
        }
        let Some(rest) = trimmed.strip_prefix("ngram ") else {
            break;
        };
        let (k, count) = rest
            .split_once('=')
            .ok_or_else(|| err(i + 1, "expected ngram k=count"))?;
        let k: usize = k
            .trim()
            .parse()
            .map_err(|e| err(i + 1, &format!("bad ngram order: {e}")))?;
        if k != declared.len() + 1 {
            return Err(err(i + 1, "ngram orders must be 1..order in sequence"));
        }
        let count: usize = count
            .trim()
            .parse()
            .map_err(|e| err(i + 1, &format!("bad ngram count: {e}")))?;
        declared.push(count);
        i += 1;
    }
    if declared.is_empty() {
        return Err(err(i.min(lines.len() - 1) + 1, "no ngram counts declared"));
    }
    let order = declared.len();
    let mut probs = HashMap::new();
    let mut vocab = BTreeSet::new();
    let mut seen_end = false;
    let mut section: Option<(usize, usize)> = None; // (k, entries read)
    while i < lines.len() {
        let trimmed = lines[i].trim();
        if trimmed.is_empty() {
            i += 1;
            continue;
        }
        if trimmed == "\\end\\" {
            if let Some((k, read)) = section {
                if read != declared[k - 1] {
                    return Err(err(
                        i + 1,
                        &format!(
                            "\\{k}-grams: expected {} entries, found {read}",
                            declared[k - 1]
                        ),
                    ));
                }
            }
            seen_end = true;
            i += 1;
            continue;
        }
        if seen_end {
            return Err(err(i + 1, "content after \\end\\"));
        }
        if let Some(k_str) = trimmed
            .strip_suffix("-grams:")
            .and_then(|s| s.strip_prefix('\\'))
        {
            if let Some((k, read)) = section {
                if read != declared[k - 1] {
                    return Err(err(
                        i + 1,
                        &format!(
                            "\\{k}-grams: expected {} entries, found {read}",
                            declared[k - 1]
                        ),
                    ));
                }
            }
            let k: usize = k_str
                .parse()
                .map_err(|e| err(i + 1, &format!("bad section order: {e}")))?;
            if k == 0 || k > order {
                return Err(err(i + 1, "section order outside declared range"));
            }
            section = Some((k, 0));
            i += 1;
            continue;
        }
        let Some((k, read)) = section.as_mut() else {
            return Err(err(i + 1, "entry outside any \\k-grams: section"));
        };
        let (lp_str, gram_str) = lines[i]
            .split_once('\t')
            .ok_or_else(|| err(i + 1, "expected log10prob<TAB>tokens"))?;
        let lp: f64 = lp_str
            .trim()
            .parse()
            .map_err(|e| err(i + 1, &format!("bad probability: {e}")))?;
        if !lp.is_finite() || lp > 0.0 {
            return Err(err(i + 1, "log10 probability must be finite and <= 0"));
        }
        let toks: Vec<&str> = gram_str.split_whitespace().collect();
        if toks.len() != *k {
            return Err(err(
                i + 1,
                &format!("expected {k} tokens, found {}", toks.len()),
            ));
        }
        let mut gram = String::new();
        for t in &toks {
            let mut chars = t.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(err(i + 1, "tokens must be single characters"));
            };
            gram.push(c);
        }
        if *k == 1 {
            vocab.insert(gram.chars().next().expect("one token"));
        }
        if probs.insert(gram, lp).is_some() {
            return Err(err(i + 1, "duplicate n-gram"));
        }
        *read += 1;
        i += 1;
    }
    if !seen_end {
        return Err(err(lines.len(), "missing \\end\\ marker"));
    }
    if vocab.is_empty() {
        return Err(LmError::EmptyModel);
    }
    Ok(NGramModel {
        order,
        backoff_alpha: alpha,
        vocab,
        probs,
    })
}
