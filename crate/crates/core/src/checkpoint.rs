//! Self-describing JSON checkpoints: kind, dims, flattened matrices,
//! normalization statistics, the configured gain bound, and a format
//! version. Values are stored as f64 regardless of the working scalar.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::model::{
    Dims, LstmLayer, LstmNetwork, Model, ModelKind, PredictorParams, RnnLayer, RnnNetwork,
    TildeParams,
};
use crate::numkit::Matrix;
use crate::scalar::{lit, to_f64, Scalar};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    fn from<T: Scalar>(m: &Matrix<T>) -> Self {
        MatrixDoc {
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().iter().map(|v| to_f64(*v)).collect(),
        }
    }

    fn to_matrix<T: Scalar>(&self) -> Result<Matrix<T>> {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|v| lit::<T>(*v)).collect(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DimsDoc {
    pub n_u: usize,
    pub n_y: usize,
    pub n_x: usize,
    pub n_z: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TildeDoc {
    pub a_t: MatrixDoc,
    pub b1_t: MatrixDoc,
    pub b2_t: MatrixDoc,
    pub c1: MatrixDoc,
    pub d11: MatrixDoc,
    pub d12: MatrixDoc,
    pub c2_t: MatrixDoc,
    pub d21_t: MatrixDoc,
    pub x: MatrixDoc,
    pub t_diag: Vec<f64>,
    pub gamma_sq: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LstmLayerDoc {
    pub w_i: MatrixDoc,
    pub u_i: MatrixDoc,
    pub b_i: Vec<f64>,
    pub w_f: MatrixDoc,
    pub u_f: MatrixDoc,
    pub b_f: Vec<f64>,
    pub w_g: MatrixDoc,
    pub u_g: MatrixDoc,
    pub b_g: Vec<f64>,
    pub w_o: MatrixDoc,
    pub u_o: MatrixDoc,
    pub b_o: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LstmDoc {
    pub layers: Vec<LstmLayerDoc>,
    pub w_out: MatrixDoc,
    pub b_out: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RnnLayerDoc {
    pub w: MatrixDoc,
    pub u: MatrixDoc,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RnnDoc {
    pub layers: Vec<RnnLayerDoc>,
    pub w_out: MatrixDoc,
    pub b_out: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PredictorDoc {
    Tilde(TildeDoc),
    Rnn(RnnDoc),
    Lstm(LstmDoc),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NormalizationDoc {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointDoc {
    pub format_version: u32,
    pub kind: ModelKind,
    pub dims: DimsDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_sq: Option<f64>,
    pub predictor: PredictorDoc,
    pub initializer: LstmDoc,
    pub normalization: NormalizationDoc,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub sample_period: f64,
}

fn lstm_to_doc<T: Scalar>(net: &LstmNetwork<T>) -> LstmDoc {
    LstmDoc {
        layers: net
            .layers
            .iter()
            .map(|l| LstmLayerDoc {
                w_i: MatrixDoc::from(&l.w_i),
                u_i: MatrixDoc::from(&l.u_i),
                b_i: l.b_i.iter().map(|v| to_f64(*v)).collect(),
                w_f: MatrixDoc::from(&l.w_f),
                u_f: MatrixDoc::from(&l.u_f),
                b_f: l.b_f.iter().map(|v| to_f64(*v)).collect(),
                w_g: MatrixDoc::from(&l.w_g),
                u_g: MatrixDoc::from(&l.u_g),
                b_g: l.b_g.iter().map(|v| to_f64(*v)).collect(),
                w_o: MatrixDoc::from(&l.w_o),
                u_o: MatrixDoc::from(&l.u_o),
                b_o: l.b_o.iter().map(|v| to_f64(*v)).collect(),
            })
            .collect(),
        w_out: MatrixDoc::from(&net.w_out),
        b_out: net.b_out.iter().map(|v| to_f64(*v)).collect(),
    }
}

fn lstm_from_doc<T: Scalar>(doc: &LstmDoc) -> Result<LstmNetwork<T>> {
    let mut layers = Vec::with_capacity(doc.layers.len());
    for l in &doc.layers {
        layers.push(LstmLayer {
            w_i: l.w_i.to_matrix()?,
            u_i: l.u_i.to_matrix()?,
            b_i: l.b_i.iter().map(|v| lit::<T>(*v)).collect(),
            w_f: l.w_f.to_matrix()?,
            u_f: l.u_f.to_matrix()?,
            b_f: l.b_f.iter().map(|v| lit::<T>(*v)).collect(),
            w_g: l.w_g.to_matrix()?,
            u_g: l.u_g.to_matrix()?,
            b_g: l.b_g.iter().map(|v| lit::<T>(*v)).collect(),
            w_o: l.w_o.to_matrix()?,
            u_o: l.u_o.to_matrix()?,
            b_o: l.b_o.iter().map(|v| lit::<T>(*v)).collect(),
        });
    }
    if layers.is_empty() {
        return Err(Error::Config("checkpoint initializer has no layers".into()));
    }
    Ok(LstmNetwork {
        layers,
        w_out: doc.w_out.to_matrix()?,
        b_out: doc.b_out.iter().map(|v| lit::<T>(*v)).collect(),
    })
}

pub fn model_to_doc<T: Scalar>(model: &Model<T>) -> CheckpointDoc {
    let predictor = match &model.predictor {
        PredictorParams::Tilde(p) => PredictorDoc::Tilde(TildeDoc {
            a_t: MatrixDoc::from(&p.a_t),
            b1_t: MatrixDoc::from(&p.b1_t),
            b2_t: MatrixDoc::from(&p.b2_t),
            c1: MatrixDoc::from(&p.c1),
            d11: MatrixDoc::from(&p.d11),
            d12: MatrixDoc::from(&p.d12),
            c2_t: MatrixDoc::from(&p.c2_t),
            d21_t: MatrixDoc::from(&p.d21_t),
            x: MatrixDoc::from(&p.x),
            t_diag: p.t_diag.iter().map(|v| to_f64(*v)).collect(),
            gamma_sq: to_f64(p.gamma_sq),
        }),
        PredictorParams::Rnn(net) => PredictorDoc::Rnn(RnnDoc {
            layers: net
                .layers
                .iter()
                .map(|l| RnnLayerDoc {
                    w: MatrixDoc::from(&l.w),
                    u: MatrixDoc::from(&l.u),
                    b: l.b.iter().map(|v| to_f64(*v)).collect(),
                })
                .collect(),
            w_out: MatrixDoc::from(&net.w_out),
            b_out: net.b_out.iter().map(|v| to_f64(*v)).collect(),
        }),
        PredictorParams::Lstm(net) => PredictorDoc::Lstm(lstm_to_doc(net)),
    };
    CheckpointDoc {
        format_version: FORMAT_VERSION,
        kind: model.kind,
        dims: DimsDoc {
            n_u: model.dims.n_u,
            n_y: model.dims.n_y,
            n_x: model.dims.n_x,
            n_z: model.dims.n_z,
        },
        gamma_sq: model.gamma_sq.map(to_f64),
        predictor,
        initializer: lstm_to_doc(&model.initializer),
        normalization: NormalizationDoc {
            mean: model.norm.mean.iter().map(|v| to_f64(*v)).collect(),
            std: model.norm.std.iter().map(|v| to_f64(*v)).collect(),
        },
        input_names: model.input_names.clone(),
        output_names: model.output_names.clone(),
        sample_period: model.sample_period,
    }
}

pub fn model_from_doc<T: Scalar>(doc: &CheckpointDoc) -> Result<Model<T>> {
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint format_version {} (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    let dims = Dims {
        n_u: doc.dims.n_u,
        n_y: doc.dims.n_y,
        n_x: doc.dims.n_x,
        n_z: doc.dims.n_z,
    };
    dims.validate()?;
    let predictor = match &doc.predictor {
        PredictorDoc::Tilde(t) => {
            let p = TildeParams {
                dims,
                a_t: t.a_t.to_matrix()?,
                b1_t: t.b1_t.to_matrix()?,
                b2_t: t.b2_t.to_matrix()?,
                c1: t.c1.to_matrix()?,
                d11: t.d11.to_matrix()?,
                d12: t.d12.to_matrix()?,
                c2_t: t.c2_t.to_matrix()?,
                d21_t: t.d21_t.to_matrix()?,
                x: t.x.to_matrix()?,
                t_diag: t.t_diag.iter().map(|v| lit::<T>(*v)).collect(),
                gamma_sq: lit::<T>(t.gamma_sq),
            };
            p.validate_shapes()?;
            PredictorParams::Tilde(p)
        }
        PredictorDoc::Rnn(r) => {
            let mut layers = Vec::with_capacity(r.layers.len());
            for l in &r.layers {
                layers.push(RnnLayer {
                    w: l.w.to_matrix()?,
                    u: l.u.to_matrix()?,
                    b: l.b.iter().map(|v| lit::<T>(*v)).collect(),
                });
            }
            if layers.is_empty() {
                return Err(Error::Config("checkpoint predictor has no layers".into()));
            }
            PredictorParams::Rnn(RnnNetwork {
                layers,
                w_out: r.w_out.to_matrix()?,
                b_out: r.b_out.iter().map(|v| lit::<T>(*v)).collect(),
            })
        }
        PredictorDoc::Lstm(l) => PredictorParams::Lstm(lstm_from_doc(l)?),
    };
    match (doc.kind, &predictor) {
        (ModelKind::Constrained | ModelKind::LtiRnn, PredictorParams::Tilde(_))
        | (ModelKind::Rnn, PredictorParams::Rnn(_))
        | (ModelKind::Lstm, PredictorParams::Lstm(_)) => {}
        (kind, _) => {
            return Err(Error::Config(format!(
                "checkpoint predictor type does not match kind {}",
                kind.name()
            )))
        }
    }
    if doc.kind.is_constrained() && doc.gamma_sq.is_none() {
        return Err(Error::Config("constrained checkpoint must carry gamma_sq".into()));
    }
    Ok(Model {
        kind: doc.kind,
        dims,
        predictor,
        initializer: lstm_from_doc(&doc.initializer)?,
        norm: Normalization {
            mean: doc.normalization.mean.iter().map(|v| lit::<T>(*v)).collect(),
            std: doc.normalization.std.iter().map(|v| lit::<T>(*v)).collect(),
        },
        input_names: doc.input_names.clone(),
        output_names: doc.output_names.clone(),
        sample_period: doc.sample_period,
        gamma_sq: doc.gamma_sq.map(|v| lit::<T>(v)),
    })
}

pub fn save<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let doc = model_to_doc(model);
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &doc)?;
    use std::io::Write;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let file = std::fs::File::open(path)?;
    let doc: CheckpointDoc = serde_json::from_reader(std::io::BufReader::new(file))?;
    model_from_doc(&doc)
}
