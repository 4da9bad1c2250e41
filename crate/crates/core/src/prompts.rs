//! Prompt templates shipped as text assets.

use crate::encoders::DescribeMode;

pub const CODE_SUMMARIZATION: &str = include_str!("../assets/prompts/code_summarization.txt");
pub const MEMBERS_DESCRIPTION: &str = include_str!("../assets/prompts/members_description.txt");
pub const FILE_SUMMARY: &str = include_str!("../assets/prompts/file_summary.txt");
pub const GRAPH_SCHEMA: &str = include_str!("../assets/prompts/graph_schema.txt");
pub const CYPHER_CROSSCODEEVAL: &str = include_str!("../assets/prompts/cypher_crosscodeeval.txt");
pub const CYPHER_REPOBENCH: &str = include_str!("../assets/prompts/cypher_repobench.txt");

pub fn template(mode: DescribeMode) -> &'static str {
    match mode {
        DescribeMode::SummarizeCode => CODE_SUMMARIZATION,
        DescribeMode::ListMembers => MEMBERS_DESCRIPTION,
        DescribeMode::SummarizeFromMembers => FILE_SUMMARY,
    }
}

/// Template followed by the input, as sent to a remote describer.
pub fn render(mode: DescribeMode, input: &str) -> String {
    let t = template(mode);
    let mut out = String::with_capacity(t.len() + input.len() + 1);
    out.push_str(t);
    if !t.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(input);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_carry_sentinels() {
        assert!(MEMBERS_DESCRIPTION.contains(crate::encoders::NO_MEMBERS));
        assert!(FILE_SUMMARY.contains(crate::encoders::NO_DESCRIPTION));
        assert!(CODE_SUMMARIZATION.trim_end().ends_with("### Code:"));
    }

    #[test]
    fn render_appends_input() {
        let r = render(DescribeMode::SummarizeCode, "def f(): pass");
        assert!(r.starts_with("### Task: Code Summarization"));
        assert!(r.ends_with("\ndef f(): pass"));
    }
}
