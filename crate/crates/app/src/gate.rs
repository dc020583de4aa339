//! Terminal review gate.

use std::io::{self, BufRead, Write};

use simulacra_core::story::{GateOutcome, ReviewDecision, ReviewGate, ReviewRequest, StoryError};

/// Asks a person at the terminal for each decision.
///
/// `a` approves, `r` regenerates, and `e` reads replacement text up to a line
/// holding a single `.`.
pub struct InteractiveGate<R, W> {
    input: R,
    output: W,
    reviewer: String,
}

impl InteractiveGate<io::StdinLock<'static>, io::Stderr> {
    pub fn stdio() -> Self {
        let reviewer = std::env::var("USER").unwrap_or_else(|_| "terminal".into());
        Self::new(io::stdin().lock(), io::stderr(), &reviewer)
    }
}

impl<R: BufRead, W: Write> InteractiveGate<R, W> {
    pub fn new(input: R, output: W, reviewer: &str) -> Self {
        Self {
            input,
            output,
            reviewer: reviewer.to_string(),
        }
    }

    fn line(&mut self) -> io::Result<Option<String>> {
        let mut buf = String::new();
        if self.input.read_line(&mut buf)? == 0 {
            return Ok(None);
        }
        Ok(Some(buf.trim_end_matches(['\r', '\n']).to_string()))
    }

    fn ask(&mut self, request: &ReviewRequest) -> io::Result<ReviewDecision> {
        let out = &mut self.output;
        writeln!(out, "\n== review {} ==", request.task_id())?;
        if !request.original.is_empty() {
            writeln!(out, "-- original --\n{}", request.original)?;
        }
        writeln!(out, "-- candidate --\n{}", request.candidate)?;
        loop {
            write!(self.output, "[a]pprove, [e]dit, [r]egenerate? ")?;
            self.output.flush()?;
            let Some(answer) = self.line()? else {
                return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "input closed during review"));
            };
            match answer.trim() {
                "a" | "approve" => return Ok(ReviewDecision::approve(&self.reviewer)),
                "r" | "regenerate" => return Ok(ReviewDecision::regenerate(&self.reviewer)),
                "e" | "edit" => {
                    writeln!(self.output, "replacement text, end with a line containing only '.':")?;
                    let mut text = Vec::new();
                    while let Some(l) = self.line()? {
                        if l == "." {
                            break;
                        }
                        text.push(l);
                    }
                    let d = ReviewDecision::edit(&self.reviewer, &text.join("\n"));
                    if d.validate().is_ok() {
                        return Ok(d);
                    }
                    writeln!(self.output, "empty edit ignored")?;
                }
                _ => {}
            }
        }
    }
}

impl<R: BufRead, W: Write> ReviewGate for InteractiveGate<R, W> {
    fn review(&mut self, request: &ReviewRequest) -> Result<GateOutcome, StoryError> {
        self.ask(request)
            .map(GateOutcome::Decided)
            .map_err(|e| StoryError::InvalidDecision(format!("terminal review failed: {e}")))
    }
}
