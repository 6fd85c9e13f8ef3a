//! Result tables in the layouts of the paper-style reports, as aligned
//! text, CSV and JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    compare_runs, confidence_rates, flip_analysis, format_points, score_run,
    score_stage, tenths, AccuracyReport, ConfReport, EvalRecord, FlipReport, Rate, ReportError,
};
use crate::answer::{GoldAnswer, Stage};
use crate::pipeline::PipelineSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Accuracy per approach and dataset/model, with combined averages.
    Table1,
    /// Critic approaches with and without oracle labels.
    Table3,
    /// Confidence rates of improved-critic runs.
    Table4,
    /// Integer- and float-answer accuracy per dataset.
    #[serde(rename = "table5_6")]
    Table5_6,
    /// Answer-flip rates and their minor/major split.
    Flips,
}

impl Layout {
    pub const ALL: [Layout; 5] = [
        Layout::Table1,
        Layout::Table3,
        Layout::Table4,
        Layout::Table5_6,
        Layout::Flips,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layout::Table1 => "table1",
            Layout::Table3 => "table3",
            Layout::Table4 => "table4",
            Layout::Table5_6 => "table5_6",
            Layout::Flips => "flips",
        }
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Layout::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown layout {s:?}"))
    }
}

/// Everything the layouts need from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub spec: PipelineSpec,
    pub dataset: String,
    pub model: String,
    pub accuracy: AccuracyReport,
    /// Accuracy of the analyst stage alone, for comparisons with CoT.
    pub analyst_accuracy: AccuracyReport,
    pub flips: Option<FlipReport>,
    pub confidence: Option<ConfReport>,
}

impl RunSummary {
    pub fn from_records(
        spec: PipelineSpec,
        dataset: impl Into<String>,
        model: impl Into<String>,
        records: &[EvalRecord],
        golds: &BTreeMap<String, GoldAnswer>,
    ) -> Result<Self, ReportError> {
        let analyst = if spec.id == crate::pipeline::PipelineId::PoT {
            Stage::PoT
        } else {
            Stage::CoT
        };
        Ok(Self {
            dataset: dataset.into(),
            model: model.into(),
            accuracy: score_run(records, golds)?,
            analyst_accuracy: score_stage(records, golds, analyst)?,
            flips: if spec.id.has_review() {
                Some(flip_analysis(records)?)
            } else {
                None
            },
            confidence: if spec.id.has_icritic() {
                Some(confidence_rates(records)?)
            } else {
                None
            },
            spec,
        })
    }

    fn row_label(&self, oracle_suffix: bool) -> String {
        let label = self.spec.id.label().to_owned();
        match (oracle_suffix && self.spec.id.has_review(), self.spec.oracle_mode) {
            (false, true) => format!("{label} (oracle)"),
            (false, false) => label,
            (true, true) => format!("{label} (oracle)"),
            (true, false) => format!("{label} (no oracle)"),
        }
    }

    fn column(&self) -> String {
        format!("{} {}", self.dataset, self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    #[default]
    None,
    Best,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub text: String,
    /// Percentage in tenths of a point, when the cell is a rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenths: Option<i64>,
    #[serde(default, skip_serializing_if = "is_unmarked")]
    pub mark: Mark,
}

fn is_unmarked(m: &Mark) -> bool {
    *m == Mark::None
}

impl Cell {
    fn rate(r: &Rate) -> Self {
        Self {
            text: r.to_string(),
            tenths: r.percent_tenths(),
            mark: Mark::None,
        }
    }

    fn points(t: Option<i64>) -> Self {
        Self {
            text: format_points(t),
            tenths: t,
            mark: Mark::None,
        }
    }

    fn blank() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub title: String,
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Cell>)>,
}

impl Grid {
    fn new(title: impl Into<String>, corner: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            title: title.into(),
            corner: corner.into(),
            columns,
            rows: Vec::new(),
        }
    }

    /// Marks the best (and optionally second-best) value of each column.
    /// Ties share a mark.
    fn mark_columns(&mut self, second: bool) {
        for c in 0..self.columns.len() {
            let mut values: Vec<i64> = self.rows.iter().filter_map(|(_, cells)| cells[c].tenths).collect();
            values.sort_unstable_by(|a, b| b.cmp(a));
            values.dedup();
            if values.len() < 2 {
                continue;
            }
            for (_, cells) in &mut self.rows {
                let cell = &mut cells[c];
                if cell.tenths == Some(values[0]) {
                    cell.mark = Mark::Best;
                } else if second && cell.tenths == Some(values[1]) {
                    cell.mark = Mark::Second;
                }
            }
        }
    }
}

/// Row labels and columns in first-seen order.
fn index<'a>(keys: impl Iterator<Item = String> + 'a) -> Vec<String> {
    let mut seen = Vec::new();
    for k in keys {
        if !seen.contains(&k) {
            seen.push(k);
        }
    }
    seen
}

/// Unweighted mean of several proportions, as tenths of a point.
fn mean_tenths(rates: &[Rate]) -> Option<i64> {
    if rates.is_empty() || rates.iter().any(|r| !r.is_defined()) {
        return None;
    }
    let den: i128 = rates.iter().map(|r| r.total as i128).product();
    let num: i128 = rates
        .iter()
        .map(|r| r.count as i128 * (den / r.total as i128))
        .sum();
    Some(tenths(num, den * rates.len() as i128) as i64)
}

fn accuracy_grid(
    title: &str,
    runs: &[RunSummary],
    oracle_suffix: bool,
    combined: bool,
) -> Result<Vec<Grid>, ReportError> {
    let mut columns = index(runs.iter().map(RunSummary::column));
    let models = index(runs.iter().map(|r| r.model.clone()));
    let datasets = index(runs.iter().map(|r| r.dataset.clone()));
    let show_combined = combined && datasets.len() > 1;
    if show_combined {
        columns.extend(models.iter().map(|m| format!("combined {m}")));
    }
    let rows = index(runs.iter().map(|r| r.row_label(oracle_suffix)));
    let find = |row: &str, col: &str| {
        runs.iter()
            .find(|r| r.row_label(oracle_suffix) == row && r.column() == col)
    };

    let mut grid = Grid::new(title, "Approach", columns.clone());
    for row in &rows {
        let mut cells = Vec::new();
        for col in &columns {
            if let Some(model) = col.strip_prefix("combined ").filter(|_| show_combined) {
                let rates: Option<Vec<Rate>> = datasets
                    .iter()
                    .map(|d| find(row, &format!("{d} {model}")).map(|r| r.accuracy.accuracy))
                    .collect();
                cells.push(rates.map_or_else(Cell::blank, |r| Cell::mean(&r)));
            } else {
                cells.push(find(row, col).map_or_else(Cell::blank, |r| Cell::rate(&r.accuracy.accuracy)));
            }
        }
        grid.rows.push((row.clone(), cells));
    }
    grid.mark_columns(!oracle_suffix);

    let mut grids = vec![grid];
    if rows.len() > 1 {
        let baseline = &rows[0];
        let data_columns: Vec<String> = index(runs.iter().map(RunSummary::column));
        let mut delta = Grid::new(format!("Change vs {baseline} (points)"), "Approach", data_columns.clone());
        for row in rows.iter().skip(1) {
            let mut cells = Vec::new();
            for col in &data_columns {
                cells.push(match (find(baseline, col), find(row, col)) {
                    (Some(a), Some(b)) => {
                        let d = compare_runs(&a.accuracy, &b.accuracy)?;
                        Cell::points(d.accuracy)
                    }
                    _ => Cell::blank(),
                });
            }
            delta.rows.push((row.clone(), cells));
        }
        grids.push(delta);
    }
    Ok(grids)
}

impl Cell {
    fn mean(rates: &[Rate]) -> Self {
        let tenths = mean_tenths(rates);
        Self {
            text: tenths.map_or_else(|| "n/a".into(), |t| format!("{}.{}%", t / 10, t % 10)),
            tenths,
            mark: Mark::None,
        }
    }
}

fn confidence_grid(runs: &[RunSummary]) -> Grid {
    let runs: Vec<&RunSummary> = runs.iter().filter(|r| r.confidence.is_some()).collect();
    let columns = runs
        .iter()
        .map(|r| format!("{} {}", r.column(), r.row_label(false)))
        .collect();
    let mut grid = Grid::new("Confidence rates", "", columns);
    type Getter = fn(&ConfReport) -> Rate;
    let rows: [(&str, Getter); 5] = [
        ("Rate(corr|conf)", |c| c.corr_given_conf),
        ("Rate(not corr|conf)", |c| c.incorr_given_conf),
        ("Rate(corr|not conf)", |c| c.corr_given_notconf),
        ("Rate(not corr|not conf)", |c| c.incorr_given_notconf),
        ("Rate(conf)", |c| c.conf),
    ];
    for (label, get) in rows {
        let cells = runs
            .iter()
            .map(|r| Cell::rate(&get(r.confidence.as_ref().unwrap())))
            .collect();
        grid.rows.push((label.to_owned(), cells));
    }
    grid
}

fn split_grids(runs: &[RunSummary]) -> Vec<Grid> {
    let mut grids = Vec::new();
    for dataset in index(runs.iter().map(|r| r.dataset.clone())) {
        let subset: Vec<&RunSummary> = runs.iter().filter(|r| r.dataset == dataset).collect();
        let models = index(subset.iter().map(|r| r.model.clone()));
        let columns = models
            .iter()
            .flat_map(|m| [format!("{m} int"), format!("{m} float")])
            .collect();
        let mut grid = Grid::new(format!("{dataset}: integer vs float answers"), "Approach", columns);
        for row in index(subset.iter().map(|r| r.row_label(false))) {
            let mut cells = Vec::new();
            for m in &models {
                match subset.iter().find(|r| r.row_label(false) == row && &r.model == m) {
                    Some(r) => {
                        cells.push(Cell::rate(&r.accuracy.accuracy_int));
                        cells.push(Cell::rate(&r.accuracy.accuracy_float));
                    }
                    None => cells.extend([Cell::blank(), Cell::blank()]),
                }
            }
            grid.rows.push((row, cells));
        }
        grid.mark_columns(true);
        grids.push(grid);
    }
    grids
}

fn flip_grids(runs: &[RunSummary]) -> Vec<Grid> {
    let runs: Vec<&RunSummary> = runs.iter().filter(|r| r.flips.is_some()).collect();
    let columns = index(runs.iter().map(|r| r.column()));
    let rows = index(runs.iter().map(|r| r.row_label(false)));
    let find = |row: &str, col: &str| {
        runs.iter()
            .find(|r| r.row_label(false) == row && r.column() == col)
            .and_then(|r| r.flips.as_ref())
    };

    let mut split = Grid::new(
        "Minor/major split of answer flips",
        "Answer flip",
        columns.iter().flat_map(|c| [format!("{c} minor"), format!("{c} major")]).collect(),
    );
    let mut rates = Grid::new(
        "Answer flip rates",
        "Approach",
        columns
            .iter()
            .flat_map(|c| [format!("{c} C->W"), format!("{c} W->C"), format!("{c} unchanged")])
            .collect(),
    );
    for row in &rows {
        for (dir, get) in [
            ("C->W", (|f: &FlipReport| f.c_to_w_minor) as fn(&FlipReport) -> Rate),
            ("W->C", |f: &FlipReport| f.w_to_c_minor),
        ] {
            let mut cells = Vec::new();
            for col in &columns {
                match find(row, col) {
                    Some(f) => {
                        let minor = get(f);
                        cells.push(Cell::rate(&minor));
                        cells.push(Cell::rate(&minor.complement()));
                    }
                    None => cells.extend([Cell::blank(), Cell::blank()]),
                }
            }
            split.rows.push((format!("{row} ({dir})"), cells));
        }
        let mut cells = Vec::new();
        for col in &columns {
            match find(row, col) {
                Some(f) => cells.extend([Cell::rate(&f.c_to_w), Cell::rate(&f.w_to_c), Cell::rate(&f.unchanged)]),
                None => cells.extend([Cell::blank(), Cell::blank(), Cell::blank()]),
            }
        }
        rates.rows.push((row.clone(), cells));
    }
    vec![split, rates]
}

/// Builds the grids of `layout` from run summaries.
pub fn grids(layout: Layout, runs: &[RunSummary]) -> Result<Vec<Grid>, ReportError> {
    match layout {
        Layout::Table1 => accuracy_grid("Accuracy", runs, false, true),
        Layout::Table3 => {
            let subset: Vec<RunSummary> = runs
                .iter()
                .filter(|r| r.spec.id.has_review() || r.spec.id == crate::pipeline::PipelineId::CoT)
                .cloned()
                .collect();
            accuracy_grid("Accuracy of critic approaches", &subset, true, false)
        }
        Layout::Table4 => Ok(vec![confidence_grid(runs)]),
        Layout::Table5_6 => Ok(split_grids(runs)),
        Layout::Flips => Ok(flip_grids(runs)),
    }
}

fn cell_text(cell: &Cell) -> String {
    match cell.mark {
        Mark::None => cell.text.clone(),
        Mark::Best => format!("{} **", cell.text),
        Mark::Second => format!("{} *", cell.text),
    }
}

pub fn render_text(layout: Layout, runs: &[RunSummary]) -> Result<String, ReportError> {
    let mut out = String::new();
    let mut marked = false;
    for grid in grids(layout, runs)? {
        let mut widths = vec![grid.corner.len()];
        widths.extend(grid.columns.iter().map(|c| c.chars().count()));
        for (label, cells) in &grid.rows {
            widths[0] = widths[0].max(label.chars().count());
            for (i, cell) in cells.iter().enumerate() {
                widths[i + 1] = widths[i + 1].max(cell_text(cell).chars().count());
                marked |= cell.mark != Mark::None;
            }
        }
        let line = |first: &str, rest: Vec<String>| {
            let mut s = format!("{first:<w$}", w = widths[0]);
            for (i, v) in rest.iter().enumerate() {
                let _ = write!(s, "  {v:>w$}", w = widths[i + 1]);
            }
            s.trim_end().to_owned()
        };
        let _ = writeln!(out, "{}", grid.title);
        let header = line(&grid.corner, grid.columns.clone());
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{}", "-".repeat(header.chars().count()));
        for (label, cells) in &grid.rows {
            let _ = writeln!(out, "{}", line(label, cells.iter().map(cell_text).collect()));
        }
        out.push('\n');
    }
    if marked {
        out.push_str("** best in column, * second best\n");
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One block per grid: a title line, a header and the rows, with blank
/// lines between blocks. Rates appear as plain percentages.
pub fn render_csv(layout: Layout, runs: &[RunSummary]) -> Result<String, ReportError> {
    let mut out = String::new();
    for (i, grid) in grids(layout, runs)?.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# {}", grid.title);
        let header: Vec<String> = std::iter::once(&grid.corner)
            .chain(&grid.columns)
            .map(|s| csv_field(s))
            .collect();
        let _ = writeln!(out, "{}", header.join(","));
        for (label, cells) in &grid.rows {
            let fields: Vec<String> = std::iter::once(csv_field(label))
                .chain(cells.iter().map(|c| csv_field(c.text.trim_end_matches('%'))))
                .collect();
            let _ = writeln!(out, "{}", fields.join(","));
        }
    }
    Ok(out)
}

pub fn render_json(layout: Layout, runs: &[RunSummary]) -> Result<String, ReportError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        layout: Layout,
        runs: &'a [RunSummary],
        grids: Vec<Grid>,
    }
    let doc = Doc {
        layout,
        runs,
        grids: grids(layout, runs)?,
    };
    Ok(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n")
}
