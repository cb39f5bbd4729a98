//! Episode dumps: one JSON object per line, one line per [`StepRecord`],
//! keys in field order (`state`, `observations`, `joint_action`, `rewards`,
//! `terminated`, `avail_actions`).

use std::io::{BufRead, Write};

use super::StepRecord;
use crate::error::Result;

pub fn write_episode_jsonl(steps: &[StepRecord], mut out: impl Write) -> Result<()> {
    for s in steps {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episode_jsonl(input: impl BufRead) -> Result<Vec<StepRecord>> {
    let mut steps = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            steps.push(serde_json::from_str(&line)?);
        }
    }
    Ok(steps)
}
