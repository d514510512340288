//! Loading, validating, and writing the seven-table OULAD CSV bundle.
//!
//! A bundle directory holds `courses.csv`, `assessments.csv`, `vle.csv`,
//! `studentInfo.csv`, `studentRegistration.csv`, `studentAssessment.csv`, and
//! `studentVle.csv` (file names matched case-insensitively). Files are comma
//! separated with a header row; an empty field means missing; a UTF-8 BOM on
//! the first header is tolerated. Columns are resolved by header name, so
//! column order does not matter and unknown columns are ignored with a
//! warning.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type IngestResult<T> = Result<T, IngestError>;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing table: no file named {0} (any case) in the data directory")]
    MissingTable(String),
    #[error("{file}: missing required column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file}:{line}: column {column:?}: {message}")]
    Parse {
        file: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
}

// ============================================================================
// Outcome labels
// ============================================================================

/// Final course outcome. The discriminants are the label encoding used
/// everywhere downstream: the four class names sorted lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Outcome {
    Distinction = 0,
    Fail = 1,
    Pass = 2,
    Withdrawn = 3,
}

pub const N_CLASSES: usize = 4;

impl Outcome {
    pub const ALL: [Outcome; N_CLASSES] = [
        Outcome::Distinction,
        Outcome::Fail,
        Outcome::Pass,
        Outcome::Withdrawn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Distinction => "Distinction",
            Outcome::Fail => "Fail",
            Outcome::Pass => "Pass",
            Outcome::Withdrawn => "Withdrawn",
        }
    }

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Outcome> {
        Outcome::ALL.get(label as usize).copied()
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Distinction" => Ok(Outcome::Distinction),
            "Fail" => Ok(Outcome::Fail),
            "Pass" => Ok(Outcome::Pass),
            "Withdrawn" => Ok(Outcome::Withdrawn),
            other => Err(format!("unknown final_result {other:?}")),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ============================================================================
// Row types
// ============================================================================

#[derive(Debug, Clone, PartialEq)]
pub struct CourseRow {
    pub code_module: String,
    pub code_presentation: String,
    pub module_presentation_length: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentRow {
    pub code_module: String,
    pub code_presentation: String,
    pub id_assessment: u32,
    pub assessment_type: String,
    /// Day offset from presentation start; the final exam date is often absent.
    pub date: Option<i32>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VleRow {
    pub id_site: u32,
    pub code_module: String,
    pub code_presentation: String,
    pub activity_type: String,
    pub week_from: Option<i32>,
    pub week_to: Option<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentInfoRow {
    pub code_module: String,
    pub code_presentation: String,
    pub id_student: u32,
    pub gender: String,
    pub region: String,
    pub highest_education: String,
    pub imd_band: Option<String>,
    pub age_band: String,
    pub num_of_prev_attempts: u32,
    pub studied_credits: u32,
    pub disability: String,
    pub final_result: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationRow {
    pub code_module: String,
    pub code_presentation: String,
    pub id_student: u32,
    /// CSV column `date_registration`; blank for a handful of real rows.
    pub registration_date: Option<i32>,
    /// CSV column `date_unregistration`; present only for withdrawn students.
    pub unregistration_date: Option<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentAssessmentRow {
    pub id_assessment: u32,
    pub id_student: u32,
    pub date_submitted: i32,
    pub is_banked: bool,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentVleRow {
    pub code_module: String,
    pub code_presentation: String,
    pub id_student: u32,
    pub id_site: u32,
    pub date: i32,
    pub sum_click: u32,
}

/// The seven tables of one dataset directory, row order as on disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawBundle {
    pub courses: Vec<CourseRow>,
    pub assessments: Vec<AssessmentRow>,
    pub vle: Vec<VleRow>,
    pub student_info: Vec<StudentInfoRow>,
    pub student_registration: Vec<RegistrationRow>,
    pub student_assessment: Vec<StudentAssessmentRow>,
    pub student_vle: Vec<StudentVleRow>,
}

pub const TABLE_NAMES: [&str; 7] = [
    "courses.csv",
    "assessments.csv",
    "vle.csv",
    "studentInfo.csv",
    "studentRegistration.csv",
    "studentAssessment.csv",
    "studentVle.csv",
];

// ============================================================================
// Loading
// ============================================================================

/// Header-resolved view of one CSV file.
struct TableReader {
    file: String,
    reader: csv::Reader<BufReader<File>>,
    index: HashMap<String, usize>,
}

impl TableReader {
    fn open(dir: &Path, canonical: &str, known: &[&str]) -> IngestResult<Self> {
        let path = find_file(dir, canonical)?;
        let file = File::open(&path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(BufReader::new(file));
        let headers = reader.headers().map_err(|source| IngestError::Csv {
            file: canonical.to_string(),
            source,
        })?;
        let mut index = HashMap::new();
        for (i, raw) in headers.iter().enumerate() {
            let name = raw.trim_start_matches('\u{feff}').trim().to_string();
            if !known.iter().any(|k| k.eq_ignore_ascii_case(&name)) {
                log::warn!("{canonical}: ignoring unknown column {name:?}");
            }
            index.insert(name.to_ascii_lowercase(), i);
        }
        Ok(TableReader {
            file: canonical.to_string(),
            reader,
            index,
        })
    }

    fn column(&self, name: &str) -> IngestResult<usize> {
        self.index
            .get(&name.to_ascii_lowercase())
            .copied()
            .ok_or_else(|| IngestError::MissingColumn {
                file: self.file.clone(),
                column: name.to_string(),
            })
    }
}

/// One record plus enough context to produce a useful parse error.
struct Row<'a> {
    file: &'a str,
    line: u64,
    record: &'a csv::StringRecord,
}

impl<'a> Row<'a> {
    fn raw(&self, idx: usize, column: &str) -> IngestResult<&'a str> {
        self.record
            .get(idx)
            .ok_or_else(|| self.err(column, "field missing"))
    }

    fn err(&self, column: &str, message: impl Into<String>) -> IngestError {
        IngestError::Parse {
            file: self.file.to_string(),
            line: self.line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    /// Required field; empty is an error.
    fn text(&self, idx: usize, column: &str) -> IngestResult<String> {
        let v = self.raw(idx, column)?.trim();
        if v.is_empty() {
            return Err(self.err(column, "empty value in required column"));
        }
        Ok(v.to_string())
    }

    /// Optional field; empty becomes `None`.
    fn text_opt(&self, idx: usize, column: &str) -> IngestResult<Option<String>> {
        let v = self.raw(idx, column)?.trim();
        Ok(if v.is_empty() {
            None
        } else {
            Some(v.to_string())
        })
    }

    fn parse<T: FromStr>(&self, idx: usize, column: &str) -> IngestResult<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.text(idx, column)?;
        v.parse()
            .map_err(|e: T::Err| self.err(column, format!("{e} (value {v:?})")))
    }

    fn parse_opt<T: FromStr>(&self, idx: usize, column: &str) -> IngestResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.text_opt(idx, column)? {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e: T::Err| self.err(column, format!("{e} (value {v:?})"))),
        }
    }
}

fn find_file(dir: &Path, canonical: &str) -> IngestResult<PathBuf> {
    let entries = std::fs::read_dir(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries.flatten() {
        let name = entry.file_name();
        if name
            .to_string_lossy()
            .eq_ignore_ascii_case(canonical)
        {
            return Ok(entry.path());
        }
    }
    Err(IngestError::MissingTable(canonical.to_string()))
}

/// Drives `read` over every record of one table with line context attached.
fn for_each_row(
    table: &mut TableReader,
    mut read: impl FnMut(&Row) -> IngestResult<()>,
) -> IngestResult<()> {
    let file = table.file.clone();
    let mut record = csv::StringRecord::new();
    loop {
        let more = table
            .reader
            .read_record(&mut record)
            .map_err(|source| IngestError::Csv {
                file: file.clone(),
                source,
            })?;
        if !more {
            return Ok(());
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        read(&Row {
            file: &file,
            line,
            record: &record,
        })?;
    }
}

/// Loads all seven tables from `dir`.
pub fn load_bundle(dir: &Path) -> IngestResult<RawBundle> {
    let mut bundle = RawBundle::default();

    let mut t = TableReader::open(
        dir,
        "courses.csv",
        &["code_module", "code_presentation", "module_presentation_length"],
    )?;
    let (cm, cp, len) = (
        t.column("code_module")?,
        t.column("code_presentation")?,
        t.column("module_presentation_length")?,
    );
    for_each_row(&mut t, |row| {
        bundle.courses.push(CourseRow {
            code_module: row.text(cm, "code_module")?,
            code_presentation: row.text(cp, "code_presentation")?,
            module_presentation_length: row.parse(len, "module_presentation_length")?,
        });
        Ok(())
    })?;

    let mut t = TableReader::open(
        dir,
        "assessments.csv",
        &[
            "code_module",
            "code_presentation",
            "id_assessment",
            "assessment_type",
            "date",
            "weight",
        ],
    )?;
    let (cm, cp, ida, ty, date, weight) = (
        t.column("code_module")?,
        t.column("code_presentation")?,
        t.column("id_assessment")?,
        t.column("assessment_type")?,
        t.column("date")?,
        t.column("weight")?,
    );
    for_each_row(&mut t, |row| {
        bundle.assessments.push(AssessmentRow {
            code_module: row.text(cm, "code_module")?,
            code_presentation: row.text(cp, "code_presentation")?,
            id_assessment: row.parse(ida, "id_assessment")?,
            assessment_type: row.text(ty, "assessment_type")?,
            date: row.parse_opt(date, "date")?,
            weight: row.parse_opt(weight, "weight")?,
        });
        Ok(())
    })?;

    let mut t = TableReader::open(
        dir,
        "vle.csv",
        &[
            "id_site",
            "code_module",
            "code_presentation",
            "activity_type",
            "week_from",
            "week_to",
        ],
    )?;
    let (ids, cm, cp, ty, wf, wt) = (
        t.column("id_site")?,
        t.column("code_module")?,
        t.column("code_presentation")?,
        t.column("activity_type")?,
        t.column("week_from")?,
        t.column("week_to")?,
    );
    for_each_row(&mut t, |row| {
        bundle.vle.push(VleRow {
            id_site: row.parse(ids, "id_site")?,
            code_module: row.text(cm, "code_module")?,
            code_presentation: row.text(cp, "code_presentation")?,
            activity_type: row.text(ty, "activity_type")?,
            week_from: row.parse_opt(wf, "week_from")?,
            week_to: row.parse_opt(wt, "week_to")?,
        });
        Ok(())
    })?;

    let mut t = TableReader::open(
        dir,
        "studentInfo.csv",
        &[
            "code_module",
            "code_presentation",
            "id_student",
            "gender",
            "region",
            "highest_education",
            "imd_band",
            "age_band",
            "num_of_prev_attempts",
            "studied_credits",
            "disability",
            "final_result",
        ],
    )?;
    let (cm, cp, ids, gender, region, edu, imd, age, prev, credits, dis, result) = (
        t.column("code_module")?,
        t.column("code_presentation")?,
        t.column("id_student")?,
        t.column("gender")?,
        t.column("region")?,
        t.column("highest_education")?,
        t.column("imd_band")?,
        t.column("age_band")?,
        t.column("num_of_prev_attempts")?,
        t.column("studied_credits")?,
        t.column("disability")?,
        t.column("final_result")?,
    );
    for_each_row(&mut t, |row| {
        bundle.student_info.push(StudentInfoRow {
            code_module: row.text(cm, "code_module")?,
            code_presentation: row.text(cp, "code_presentation")?,
            id_student: row.parse(ids, "id_student")?,
            gender: row.text(gender, "gender")?,
            region: row.text(region, "region")?,
            highest_education: row.text(edu, "highest_education")?,
            imd_band: row.text_opt(imd, "imd_band")?,
            age_band: row.text(age, "age_band")?,
            num_of_prev_attempts: row.parse(prev, "num_of_prev_attempts")?,
            studied_credits: row.parse(credits, "studied_credits")?,
            disability: row.text(dis, "disability")?,
            final_result: row.parse(result, "final_result")?,
        });
        Ok(())
    })?;

    let mut t = TableReader::open(
        dir,
        "studentRegistration.csv",
        &[
            "code_module",
            "code_presentation",
            "id_student",
            "date_registration",
            "date_unregistration",
        ],
    )?;
    let (cm, cp, ids, dr, du) = (
        t.column("code_module")?,
        t.column("code_presentation")?,
        t.column("id_student")?,
        t.column("date_registration")?,
        t.column("date_unregistration")?,
    );
    for_each_row(&mut t, |row| {
        bundle.student_registration.push(RegistrationRow {
            code_module: row.text(cm, "code_module")?,
            code_presentation: row.text(cp, "code_presentation")?,
            id_student: row.parse(ids, "id_student")?,
            registration_date: row.parse_opt(dr, "date_registration")?,
            unregistration_date: row.parse_opt(du, "date_unregistration")?,
        });
        Ok(())
    })?;

    let mut t = TableReader::open(
        dir,
        "studentAssessment.csv",
        &[
            "id_assessment",
            "id_student",
            "date_submitted",
            "is_banked",
            "score",
        ],
    )?;
    let (ida, ids, ds, ib, score) = (
        t.column("id_assessment")?,
        t.column("id_student")?,
        t.column("date_submitted")?,
        t.column("is_banked")?,
        t.column("score")?,
    );
    for_each_row(&mut t, |row| {
        bundle.student_assessment.push(StudentAssessmentRow {
            id_assessment: row.parse(ida, "id_assessment")?,
            id_student: row.parse(ids, "id_student")?,
            date_submitted: row.parse(ds, "date_submitted")?,
            is_banked: row.parse::<i32>(ib, "is_banked")? != 0,
            score: row.parse_opt(score, "score")?,
        });
        Ok(())
    })?;

    let mut t = TableReader::open(
        dir,
        "studentVle.csv",
        &[
            "code_module",
            "code_presentation",
            "id_student",
            "id_site",
            "date",
            "sum_click",
        ],
    )?;
    let (cm, cp, ids, site, date, clicks) = (
        t.column("code_module")?,
        t.column("code_presentation")?,
        t.column("id_student")?,
        t.column("id_site")?,
        t.column("date")?,
        t.column("sum_click")?,
    );
    for_each_row(&mut t, |row| {
        bundle.student_vle.push(StudentVleRow {
            code_module: row.text(cm, "code_module")?,
            code_presentation: row.text(cp, "code_presentation")?,
            id_student: row.parse(ids, "id_student")?,
            id_site: row.parse(site, "id_site")?,
            date: row.parse(date, "date")?,
            sum_click: row.parse(clicks, "sum_click")?,
        });
        Ok(())
    })?;

    Ok(bundle)
}

// ============================================================================
// Validation
// ============================================================================

#[derive(Debug, Clone, PartialEq)]
pub struct TableSummary {
    pub name: String,
    pub rows: usize,
    pub columns: usize,
    pub missing_cells: usize,
    /// Only columns with at least one missing value appear here.
    pub missing_by_column: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub tables: Vec<TableSummary>,
    pub violations: Vec<String>,
    pub ok: bool,
}

impl ValidationReport {
    pub fn table(&self, name: &str) -> Option<&TableSummary> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Row counts plus missing-value counts per table.
pub fn table_stats(bundle: &RawBundle) -> Vec<TableSummary> {
    fn summary(
        name: &str,
        rows: usize,
        columns: usize,
        missing: Vec<(&str, usize)>,
    ) -> TableSummary {
        let missing_by_column: Vec<(String, usize)> = missing
            .into_iter()
            .filter(|(_, n)| *n > 0)
            .map(|(c, n)| (c.to_string(), n))
            .collect();
        TableSummary {
            name: name.to_string(),
            rows,
            columns,
            missing_cells: missing_by_column.iter().map(|(_, n)| n).sum(),
            missing_by_column,
        }
    }

    let b = bundle;
    vec![
        summary("courses.csv", b.courses.len(), 3, vec![]),
        summary(
            "assessments.csv",
            b.assessments.len(),
            6,
            vec![
                ("date", b.assessments.iter().filter(|r| r.date.is_none()).count()),
                (
                    "weight",
                    b.assessments.iter().filter(|r| r.weight.is_none()).count(),
                ),
            ],
        ),
        summary(
            "vle.csv",
            b.vle.len(),
            6,
            vec![
                ("week_from", b.vle.iter().filter(|r| r.week_from.is_none()).count()),
                ("week_to", b.vle.iter().filter(|r| r.week_to.is_none()).count()),
            ],
        ),
        summary(
            "studentInfo.csv",
            b.student_info.len(),
            12,
            vec![(
                "imd_band",
                b.student_info.iter().filter(|r| r.imd_band.is_none()).count(),
            )],
        ),
        summary(
            "studentRegistration.csv",
            b.student_registration.len(),
            5,
            vec![
                (
                    "date_registration",
                    b.student_registration
                        .iter()
                        .filter(|r| r.registration_date.is_none())
                        .count(),
                ),
                (
                    "date_unregistration",
                    b.student_registration
                        .iter()
                        .filter(|r| r.unregistration_date.is_none())
                        .count(),
                ),
            ],
        ),
        summary(
            "studentAssessment.csv",
            b.student_assessment.len(),
            5,
            vec![(
                "score",
                b.student_assessment
                    .iter()
                    .filter(|r| r.score.is_none())
                    .count(),
            )],
        ),
        summary("studentVle.csv", b.student_vle.len(), 6, vec![]),
    ]
}

/// Referential-integrity and key checks over a loaded bundle.
///
/// `ok == true` guarantees every merge key used by the feature pipeline
/// resolves: child tables reference known courses, student activity and
/// registrations reference known students, and submissions reference known
/// assessments.
pub fn validate_bundle(bundle: &RawBundle) -> ValidationReport {
    let mut violations = Vec::new();

    let courses: HashSet<(&str, &str)> = bundle
        .courses
        .iter()
        .map(|c| (c.code_module.as_str(), c.code_presentation.as_str()))
        .collect();
    let mut check_course = |table: &str, line: usize, m: &str, p: &str| {
        if !courses.contains(&(m, p)) {
            violations.push(format!(
                "{table} row {line}: ({m}, {p}) not present in courses.csv"
            ));
        }
    };
    for (i, r) in bundle.assessments.iter().enumerate() {
        check_course("assessments.csv", i + 2, &r.code_module, &r.code_presentation);
    }
    for (i, r) in bundle.vle.iter().enumerate() {
        check_course("vle.csv", i + 2, &r.code_module, &r.code_presentation);
    }
    for (i, r) in bundle.student_info.iter().enumerate() {
        check_course("studentInfo.csv", i + 2, &r.code_module, &r.code_presentation);
    }
    for (i, r) in bundle.student_registration.iter().enumerate() {
        check_course(
            "studentRegistration.csv",
            i + 2,
            &r.code_module,
            &r.code_presentation,
        );
    }
    for (i, r) in bundle.student_vle.iter().enumerate() {
        check_course("studentVle.csv", i + 2, &r.code_module, &r.code_presentation);
    }

    let mut students: HashSet<(&str, &str, u32)> = HashSet::with_capacity(bundle.student_info.len());
    for (i, r) in bundle.student_info.iter().enumerate() {
        let key = (
            r.code_module.as_str(),
            r.code_presentation.as_str(),
            r.id_student,
        );
        if !students.insert(key) {
            violations.push(format!(
                "studentInfo.csv row {}: duplicate primary key ({}, {}, {})",
                i + 2,
                r.code_module,
                r.code_presentation,
                r.id_student
            ));
        }
    }

    for (i, r) in bundle.student_registration.iter().enumerate() {
        let key = (
            r.code_module.as_str(),
            r.code_presentation.as_str(),
            r.id_student,
        );
        if !students.contains(&key) {
            violations.push(format!(
                "studentRegistration.csv row {}: student ({}, {}, {}) not in studentInfo.csv",
                i + 2,
                r.code_module,
                r.code_presentation,
                r.id_student
            ));
        }
    }

    for (i, r) in bundle.student_vle.iter().enumerate() {
        let key = (
            r.code_module.as_str(),
            r.code_presentation.as_str(),
            r.id_student,
        );
        if !students.contains(&key) {
            violations.push(format!(
                "studentVle.csv row {}: student ({}, {}, {}) not in studentInfo.csv",
                i + 2,
                r.code_module,
                r.code_presentation,
                r.id_student
            ));
        }
    }

    let assessment_ids: HashSet<u32> =
        bundle.assessments.iter().map(|a| a.id_assessment).collect();
    for (i, r) in bundle.student_assessment.iter().enumerate() {
        if !assessment_ids.contains(&r.id_assessment) {
            violations.push(format!(
                "studentAssessment.csv row {}: id_assessment {} not in assessments.csv",
                i + 2,
                r.id_assessment
            ));
        }
    }

    let ok = violations.is_empty();
    ValidationReport {
        tables: table_stats(bundle),
        violations,
        ok,
    }
}

// ============================================================================
// Writing
// ============================================================================

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a bundle back to `dir` under the canonical file names.
///
/// Output is normalized: canonical column order, quoting only where needed,
/// `\n` line endings. Reloading a written bundle yields an equal `RawBundle`.
pub fn write_bundle(bundle: &RawBundle, dir: &Path) -> IngestResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let writer = |name: &str| -> IngestResult<csv::Writer<File>> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(csv::WriterBuilder::new().from_writer(file))
    };
    let fail = |name: &str| {
        let file = name.to_string();
        move |source: csv::Error| IngestError::Csv {
            file: file.clone(),
            source,
        }
    };

    let mut w = writer("courses.csv")?;
    let e = fail("courses.csv");
    w.write_record(["code_module", "code_presentation", "module_presentation_length"])
        .map_err(e)?;
    for r in &bundle.courses {
        w.write_record([
            r.code_module.as_str(),
            r.code_presentation.as_str(),
            &r.module_presentation_length.to_string(),
        ])
        .map_err(fail("courses.csv"))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: dir.join("courses.csv"),
        source,
    })?;

    let mut w = writer("assessments.csv")?;
    w.write_record([
        "code_module",
        "code_presentation",
        "id_assessment",
        "assessment_type",
        "date",
        "weight",
    ])
    .map_err(fail("assessments.csv"))?;
    for r in &bundle.assessments {
        w.write_record([
            r.code_module.as_str(),
            r.code_presentation.as_str(),
            &r.id_assessment.to_string(),
            &r.assessment_type,
            &opt_str(&r.date),
            &opt_str(&r.weight),
        ])
        .map_err(fail("assessments.csv"))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: dir.join("assessments.csv"),
        source,
    })?;

    let mut w = writer("vle.csv")?;
    w.write_record([
        "id_site",
        "code_module",
        "code_presentation",
        "activity_type",
        "week_from",
        "week_to",
    ])
    .map_err(fail("vle.csv"))?;
    for r in &bundle.vle {
        w.write_record([
            r.id_site.to_string().as_str(),
            &r.code_module,
            &r.code_presentation,
            &r.activity_type,
            &opt_str(&r.week_from),
            &opt_str(&r.week_to),
        ])
        .map_err(fail("vle.csv"))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: dir.join("vle.csv"),
        source,
    })?;

    let mut w = writer("studentInfo.csv")?;
    w.write_record([
        "code_module",
        "code_presentation",
        "id_student",
        "gender",
        "region",
        "highest_education",
        "imd_band",
        "age_band",
        "num_of_prev_attempts",
        "studied_credits",
        "disability",
        "final_result",
    ])
    .map_err(fail("studentInfo.csv"))?;
    for r in &bundle.student_info {
        w.write_record([
            r.code_module.as_str(),
            &r.code_presentation,
            &r.id_student.to_string(),
            &r.gender,
            &r.region,
            &r.highest_education,
            &opt_str(&r.imd_band),
            &r.age_band,
            &r.num_of_prev_attempts.to_string(),
            &r.studied_credits.to_string(),
            &r.disability,
            r.final_result.as_str(),
        ])
        .map_err(fail("studentInfo.csv"))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: dir.join("studentInfo.csv"),
        source,
    })?;

    let mut w = writer("studentRegistration.csv")?;
    w.write_record([
        "code_module",
        "code_presentation",
        "id_student",
        "date_registration",
        "date_unregistration",
    ])
    .map_err(fail("studentRegistration.csv"))?;
    for r in &bundle.student_registration {
        w.write_record([
            r.code_module.as_str(),
            &r.code_presentation,
            &r.id_student.to_string(),
            &opt_str(&r.registration_date),
            &opt_str(&r.unregistration_date),
        ])
        .map_err(fail("studentRegistration.csv"))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: dir.join("studentRegistration.csv"),
        source,
    })?;

    let mut w = writer("studentAssessment.csv")?;
    w.write_record([
        "id_assessment",
        "id_student",
        "date_submitted",
        "is_banked",
        "score",
    ])
    .map_err(fail("studentAssessment.csv"))?;
    for r in &bundle.student_assessment {
        w.write_record([
            r.id_assessment.to_string().as_str(),
            &r.id_student.to_string(),
            &r.date_submitted.to_string(),
            if r.is_banked { "1" } else { "0" },
            &opt_str(&r.score),
        ])
        .map_err(fail("studentAssessment.csv"))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: dir.join("studentAssessment.csv"),
        source,
    })?;

    let mut w = writer("studentVle.csv")?;
    w.write_record([
        "code_module",
        "code_presentation",
        "id_student",
        "id_site",
        "date",
        "sum_click",
    ])
    .map_err(fail("studentVle.csv"))?;
    for r in &bundle.student_vle {
        w.write_record([
            r.code_module.as_str(),
            &r.code_presentation,
            &r.id_student.to_string(),
            &r.id_site.to_string(),
            &r.date.to_string(),
            &r.sum_click.to_string(),
        ])
        .map_err(fail("studentVle.csv"))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: dir.join("studentVle.csv"),
        source,
    })?;

    Ok(())
}

/// Reads a whole file with any UTF-8 BOM stripped; test helper for odd inputs.
#[allow(dead_code)]
fn read_stripped(path: &Path) -> IngestResult<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(s.trim_start_matches('\u{feff}').to_string())
}
