use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableBlock {
    pub rows: Vec<Vec<String>>,
    /// Carried for reports; not part of the serialized prompt layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl TableBlock {
    pub fn new(rows: Vec<Vec<String>>) -> Self {
        Self { rows, caption: None }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl<S: Into<String>> FromIterator<Vec<S>> for TableBlock {
    fn from_iter<I: IntoIterator<Item = Vec<S>>>(iter: I) -> Self {
        TableBlock::new(
            iter.into_iter()
                .map(|row| row.into_iter().map(Into::into).collect())
                .collect(),
        )
    }
}

/// Pipe-delimited rows: `| a | b | ` with one space of padding on each side
/// of every cell and a trailing space after the closing pipe. Newlines inside
/// cells are flattened to spaces so each row stays on one line.
pub fn serialize_table(table: &TableBlock) -> String {
    table
        .rows
        .iter()
        .map(|row| {
            let mut line = String::new();
            for cell in row {
                line.push_str("| ");
                line.push_str(&cell.replace(['\r', '\n'], " "));
                line.push(' ');
            }
            line.push_str("| ");
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}
