//! Human-in-the-loop label source reading answers from a text stream.

use std::io::{BufRead, Write};

use aced::pool::LabelSource;
use aced::AcedError;

/// Asks for each label once and remembers the answer.
pub struct PromptLabels<R, W> {
    ids: Vec<String>,
    input: R,
    prompt: W,
    answers: Vec<Option<bool>>,
}

impl<R: BufRead, W: Write> PromptLabels<R, W> {
    pub fn new(ids: Vec<String>, input: R, prompt: W) -> Self {
        let n = ids.len();
        Self {
            ids,
            input,
            prompt,
            answers: vec![None; n],
        }
    }
}

impl<R: BufRead, W: Write> LabelSource for PromptLabels<R, W> {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn is_persistent(&self) -> bool {
        true
    }

    fn query(&mut self, index: usize) -> aced::Result<bool> {
        let id = self.ids.get(index).ok_or(AcedError::IndexOutOfRange {
            index,
            len: self.ids.len(),
        })?;
        if let Some(y) = self.answers[index] {
            return Ok(y);
        }
        let io = |e: std::io::Error| AcedError::LabelSource(e.to_string());
        loop {
            write!(self.prompt, "label for {id} [0/1]: ").map_err(io)?;
            self.prompt.flush().map_err(io)?;
            let mut line = String::new();
            if self.input.read_line(&mut line).map_err(io)? == 0 {
                return Err(AcedError::LabelSource("input closed".into()));
            }
            let y = match line.trim() {
                "0" => false,
                "1" => true,
                _ => continue,
            };
            self.answers[index] = Some(y);
            return Ok(y);
        }
    }
}
