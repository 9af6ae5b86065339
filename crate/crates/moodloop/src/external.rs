//! Line-delimited JSON generator protocol over stdio.
//!
//! Request `{"context": ["tok", ...]}`, response `{"probs": {"tok": p, ...}}`.
//! The client learns the vocabulary from the response to an empty context;
//! later responses may only mention tokens from it (absent ones get 0).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use moodloop_core::generate::{GenerateError, GeneratorModel};
use moodloop_core::token::Token;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    pub context: Vec<Token>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Response {
    pub probs: BTreeMap<Token, f64>,
}

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A generator running in a child process.
pub struct ExternalGenerator {
    child: Child,
    pipe: Mutex<Pipe>,
    vocab: Vec<Token>,
    index: BTreeMap<Token, usize>,
}

fn exchange(pipe: &mut Pipe, context: Vec<Token>) -> std::result::Result<Response, String> {
    let mut line = serde_json::to_string(&Request { context }).map_err(|e| e.to_string())?;
    line.push('\n');
    pipe.stdin.write_all(line.as_bytes()).and_then(|_| pipe.stdin.flush()).map_err(|e| e.to_string())?;
    let mut reply = String::new();
    if pipe.stdout.read_line(&mut reply).map_err(|e| e.to_string())? == 0 {
        return Err("generator closed its output".into());
    }
    serde_json::from_str(&reply).map_err(|e| format!("bad generator response: {e}"))
}

impl ExternalGenerator {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut pipe = Pipe { stdin, stdout };
        let first = exchange(&mut pipe, Vec::new()).map_err(Error::Transport)?;
        let vocab: Vec<Token> = first.probs.into_keys().collect();
        if vocab.is_empty() {
            return Err(Error::invalid("external generator reported an empty vocabulary"));
        }
        let index = vocab.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Ok(ExternalGenerator { child, pipe: Mutex::new(pipe), vocab, index })
    }
}

impl Drop for ExternalGenerator {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl GeneratorModel for ExternalGenerator {
    fn vocabulary(&self) -> &[Token] {
        &self.vocab
    }

    fn next_token_distribution(&self, context: &[u32]) -> std::result::Result<Vec<f64>, GenerateError> {
        let ctx = context.iter().map(|&i| self.vocab[i as usize].clone()).collect();
        let mut pipe = self.pipe.lock().map_err(|_| GenerateError::Model("generator pipe poisoned".into()))?;
        let resp = exchange(&mut pipe, ctx).map_err(GenerateError::Model)?;
        let mut p = vec![0.0; self.vocab.len()];
        for (t, v) in resp.probs {
            let i = self.index.get(&t).ok_or_else(|| GenerateError::UnknownToken(t.to_string()))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GenerateError::Model(format!("probability {v} for {t}")));
            }
            p[*i] = v;
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(GenerateError::Model(format!("probabilities sum to {total}")));
        }
        Ok(p)
    }
}

/// Answer protocol requests from `input` with `model` until EOF.
pub fn serve<M: GeneratorModel + ?Sized>(model: &M, input: impl BufRead, mut output: impl Write) -> Result<()> {
    let index: BTreeMap<&Token, u32> = model.vocabulary().iter().zip(0u32..).collect();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line)?;
        let ids = req
            .context
            .iter()
            .map(|t| index.get(t).copied().ok_or_else(|| Error::invalid(format!("token {t} is not in the vocabulary"))))
            .collect::<Result<Vec<_>>>()?;
        let p = model.next_token_distribution(&ids)?;
        let probs = model.vocabulary().iter().cloned().zip(p).collect();
        let mut reply = serde_json::to_string(&Response { probs })?;
        reply.push('\n');
        output.write_all(reply.as_bytes()).and_then(|_| output.flush()).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use moodloop_core::generate::train_generator;
    use moodloop_core::token::parse_tokens;

    #[test]
    fn serve_answers_each_line() {
        let m = train_generator(&[parse_tokens("tempo:160 start new_measure wait:960 end").unwrap()], 3, 0.1).unwrap();
        let input = "{\"context\":[]}\n\n{\"context\":[\"tempo:160\",\"start\"]}\n";
        let mut out = Vec::new();
        serve(&m, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<Response> = String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].probs.len(), m.vocabulary().len());
        let best = lines[1].probs.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(*best, Token::NewMeasure);
        assert!(serve(&m, "{\"context\":[\"tempo:999\"]}".as_bytes(), Vec::new()).is_err());
    }
}
