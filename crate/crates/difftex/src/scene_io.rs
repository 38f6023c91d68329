//! Scene ingest and export.
//!
//! Formats:
//! - Proxy mesh: OBJ with polygonal faces kept whole (no triangulation).
//!   Vertex coordinates are written with shortest round-trip formatting, so
//!   write/load is bit-exact.
//! - Cameras: one JSON document listing an entry per photo filename, with
//!   `x_cam = R x_world + t` and `p = (fx x/z + cx, fy y/z + cy)`.
//! - Photos and textures: 8-bit RGB PNG. Texel values in `[0,1]` quantize to
//!   `round(v * 255)`, so requantization error stays within `1/(2*255)`.
//!
//! Texture PNGs store texel row 0 at the bottom of the image (OBJ `vt`
//! convention); photos are stored top-down matching pixel coordinates.

use crate::camera::Camera;
use crate::chart::UvChart;
use crate::error::{Error, Result};
use crate::grid::{Color, Grid};
use crate::scene::{Photo, ProxyModel, ProxyPolygon, SceneConfig};
use crate::texture_field::TextureMap;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct CameraEntry {
    pub photo: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    /// Translation in the camera frame.
    pub translation: [f64; 3],
}

#[derive(Serialize, Deserialize, Clone, Debug, Default)]
pub struct CameraFile {
    pub cameras: Vec<CameraEntry>,
}

impl CameraEntry {
    pub fn to_camera(&self) -> Camera {
        Camera {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            rotation: Matrix3::from_rows(&[
                Vector3::new(self.rotation[0][0], self.rotation[0][1], self.rotation[0][2])
                    .transpose(),
                Vector3::new(self.rotation[1][0], self.rotation[1][1], self.rotation[1][2])
                    .transpose(),
                Vector3::new(self.rotation[2][0], self.rotation[2][1], self.rotation[2][2])
                    .transpose(),
            ]),
            translation: Vector3::new(
                self.translation[0],
                self.translation[1],
                self.translation[2],
            ),
        }
    }

    pub fn from_camera(photo: &str, cam: &Camera) -> Self {
        let r = &cam.rotation;
        Self {
            photo: photo.to_string(),
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse an OBJ file into a proxy model. Faces stay polygonal; `f` entries
/// may use `v`, `v/vt`, or `v/vt/vn` forms.
pub fn load_obj(path: &Path) -> Result<ProxyModel> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut polygons = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with("v ") {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 4 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("line {}: malformed vertex", lineno + 1),
                });
            }
            let coords: std::result::Result<Vec<f64>, _> =
                parts[1..4].iter().map(|s| s.parse::<f64>()).collect();
            let coords = coords.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {}", lineno + 1, e),
            })?;
            vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
        } else if line.starts_with("f ") {
            let mut face = Vec::new();
            for token in line.split_whitespace().skip(1) {
                let idx_str = token.split('/').next().unwrap_or("");
                let idx: i64 = idx_str.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("line {}: bad face index '{token}'", lineno + 1),
                })?;
                let resolved = if idx > 0 {
                    (idx - 1) as usize
                } else {
                    // Negative indices count from the end of the pool.
                    (vertices.len() as i64 + idx) as usize
                };
                if resolved >= vertices.len() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        message: format!("line {}: face index out of range", lineno + 1),
                    });
                }
                face.push(vertices[resolved]);
            }
            let index = polygons.len();
            let poly = ProxyPolygon::from_vertices(index, face)?;
            poly.validate(index)?;
            polygons.push(poly);
        }
    }
    if polygons.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "no faces found".to_string(),
        });
    }
    Ok(ProxyModel { polygons })
}

/// Write a proxy model as a plain OBJ (vertex pool deduplicated by exact
/// bit equality). Coordinates use shortest round-trip formatting.
pub fn write_obj(path: &Path, model: &ProxyModel) -> Result<()> {
    let mut pool: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<Vec<usize>> = Vec::new();
    for poly in &model.polygons {
        let mut face = Vec::new();
        for v in &poly.vertices {
            let found = pool.iter().position(|p| p == v);
            let idx = match found {
                Some(i) => i,
                None => {
                    pool.push(*v);
                    pool.len() - 1
                }
            };
            face.push(idx);
        }
        faces.push(face);
    }
    let mut out = String::new();
    for v in &pool {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for face in &faces {
        out.push('f');
        for idx in face {
            out.push_str(&format!(" {}", idx + 1));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_camera_file(path: &Path) -> Result<CameraFile> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_camera_file(path: &Path, cameras: &CameraFile) -> Result<()> {
    let text = serde_json::to_string_pretty(cameras).expect("camera file serializes");
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Load an 8-bit RGB PNG into a `[0,1]` color grid (top-down rows).
pub fn load_png(path: &Path) -> Result<Grid<Color>> {
    let img = image::open(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut grid = Grid::new(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let p = img.get_pixel(x as u32, y as u32);
            grid.set(
                x,
                y,
                [
                    p.0[0] as f64 / 255.0,
                    p.0[1] as f64 / 255.0,
                    p.0[2] as f64 / 255.0,
                ],
            );
        }
    }
    Ok(grid)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Save a `[0,1]` color grid as 8-bit RGB PNG (top-down rows).
pub fn save_png(path: &Path, grid: &Grid<Color>) -> Result<()> {
    let mut img = image::RgbImage::new(grid.width() as u32, grid.height() as u32);
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let c = grid.get(x, y);
            img.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([quantize(c[0]), quantize(c[1]), quantize(c[2])]),
            );
        }
    }
    img.save(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Save a chart-space texture. Texel row 0 lands at the bottom PNG row so
/// that OBJ `vt` coordinates read the image conventionally.
pub fn save_texture_png(path: &Path, texture: &Grid<Color>) -> Result<()> {
    let flipped = Grid::from_fn(texture.width(), texture.height(), |x, y| {
        *texture.get(x, texture.height() - 1 - y)
    });
    save_png(path, &flipped)
}

/// Inverse of [`save_texture_png`].
pub fn load_texture_png(path: &Path) -> Result<Grid<Color>> {
    let img = load_png(path)?;
    Ok(Grid::from_fn(img.width(), img.height(), |x, y| {
        *img.get(x, img.height() - 1 - y)
    }))
}

/// Load the full scene described by `config`: proxy mesh, cameras and photos.
/// Photo ids are assigned by sorted filename.
pub fn load_scene(config: &SceneConfig) -> Result<(ProxyModel, Vec<Photo>)> {
    for path in [&config.proxy_path, &config.camera_file, &config.photo_dir] {
        if !path.exists() {
            return Err(Error::MissingPath(path.clone()));
        }
    }
    let model = load_obj(&config.proxy_path)?;
    let camera_file = load_camera_file(&config.camera_file)?;

    let mut names: Vec<String> = fs::read_dir(&config.photo_dir)
        .map_err(|e| io_err(&config.photo_dir, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| {
            entry
                .path()
                .extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .map(|entry| entry.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();

    if names.len() != camera_file.cameras.len() {
        return Err(Error::CameraCountMismatch {
            photos: names.len(),
            cameras: camera_file.cameras.len(),
        });
    }

    let mut photos = Vec::with_capacity(names.len());
    for (id, name) in names.iter().enumerate() {
        let entry = camera_file
            .cameras
            .iter()
            .find(|c| &c.photo == name)
            .ok_or_else(|| Error::MissingCameraEntry(name.clone()))?;
        let camera = entry.to_camera();
        camera.validate(name)?;
        let rgb = load_png(&config.photo_dir.join(name))?;
        let photo = Photo {
            id,
            name: name.clone(),
            camera,
            rgb,
        };
        photo.validate()?;
        photos.push(photo);
    }
    Ok((model, photos))
}

/// Write a scene (mesh, cameras, photos) into `dir` using the same formats
/// `load_scene` reads. Used by the synthetic harness; round-trips bit-exactly.
pub fn write_scene(dir: &Path, model: &ProxyModel, photos: &[Photo]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let photo_dir = dir.join("photos");
    fs::create_dir_all(&photo_dir).map_err(|e| io_err(&photo_dir, e))?;

    write_obj(&dir.join("mesh.obj"), model)?;
    let camera_file = CameraFile {
        cameras: photos
            .iter()
            .map(|p| CameraEntry::from_camera(&p.name, &p.camera))
            .collect(),
    };
    write_camera_file(&dir.join("cameras.json"), &camera_file)?;
    for photo in photos {
        save_png(&photo_dir.join(&photo.name), &photo.rgb)?;
    }
    Ok(dir.to_path_buf())
}

fn texture_file_name(polygon: usize) -> String {
    format!("polygon_{polygon:03}.png")
}

/// Export the textured proxy: one lossless PNG per polygon, an OBJ+MTL with
/// per-vertex UVs referencing those images, and the metrics report JSON.
pub fn write_outputs<R: Serialize>(
    model: &ProxyModel,
    charts: &[UvChart],
    textures: &[TextureMap],
    report: &R,
    out_dir: &Path,
) -> Result<()> {
    if charts.len() != model.polygons.len() || textures.len() != model.polygons.len() {
        return Err(Error::LayoutMismatch(format!(
            "{} polygons vs {} charts / {} textures",
            model.polygons.len(),
            charts.len(),
            textures.len()
        )));
    }
    for (chart, texture) in charts.iter().zip(textures) {
        if chart.width != texture.rgb.width() || chart.height != texture.rgb.height() {
            return Err(Error::ResolutionMismatch {
                chart_w: chart.width,
                chart_h: chart.height,
                tex_w: texture.rgb.width(),
                tex_h: texture.rgb.height(),
            });
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let tex_dir = out_dir.join("textures");
    fs::create_dir_all(&tex_dir).map_err(|e| io_err(&tex_dir, e))?;

    for (i, texture) in textures.iter().enumerate() {
        save_texture_png(&tex_dir.join(texture_file_name(i)), &texture.rgb)?;
    }

    // MTL: one material per polygon.
    let mtl_path = out_dir.join("mesh.mtl");
    let mut mtl = fs::File::create(&mtl_path).map_err(|e| io_err(&mtl_path, e))?;
    for i in 0..model.polygons.len() {
        writeln!(mtl, "newmtl polygon_{i:03}").map_err(|e| io_err(&mtl_path, e))?;
        writeln!(mtl, "Kd 1.0 1.0 1.0").map_err(|e| io_err(&mtl_path, e))?;
        writeln!(mtl, "map_Kd textures/{}", texture_file_name(i)).map_err(|e| io_err(&mtl_path, e))?;
    }

    // OBJ with per-corner UVs; vt maps plane coordinates onto the chart
    // rectangle, so (0,0) is the chart's (min_u, min_v) corner.
    let obj_path = out_dir.join("mesh.obj");
    let mut obj = String::from("mtllib mesh.mtl\n");
    let mut vert_base = 1usize;
    let mut uv_base = 1usize;
    for (i, (poly, chart)) in model.polygons.iter().zip(charts).enumerate() {
        for v in &poly.vertices {
            obj.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for v in &poly.vertices {
            let (u, w) = poly.plane_coords(v);
            let tu = (u - chart.min_u) / chart.extent.0;
            let tv = (w - chart.min_v) / chart.extent.1;
            obj.push_str(&format!("vt {} {}\n", tu, tv));
        }
        obj.push_str(&format!("usemtl polygon_{i:03}\nf"));
        for j in 0..poly.vertices.len() {
            obj.push_str(&format!(" {}/{}", vert_base + j, uv_base + j));
        }
        obj.push('\n');
        vert_base += poly.vertices.len();
        uv_base += poly.vertices.len();
    }
    fs::write(&obj_path, obj).map_err(|e| io_err(&obj_path, e))?;

    let report_path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Parse {
        path: report_path.clone(),
        message: e.to_string(),
    })?;
    fs::write(&report_path, text).map_err(|e| io_err(&report_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn quad_model() -> ProxyModel {
        ProxyModel {
            polygons: vec![ProxyPolygon::from_vertices(
                0,
                vec![
                    Vector3::new(0.0, 0.0, 0.0),
                    Vector3::new(1.0, 0.0, 0.0),
                    Vector3::new(1.0, 1.0, 0.0),
                    Vector3::new(0.0, 1.0, 0.0),
                ],
            )
            .unwrap()],
        }
    }

    #[test]
    fn obj_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mesh.obj");
        let model = ProxyModel {
            polygons: vec![ProxyPolygon::from_vertices(
                0,
                vec![
                    Vector3::new(0.1234567890123456, -2.5, 0.0),
                    Vector3::new(1.0000000000000002, 0.3, 0.0),
                    Vector3::new(0.7, std::f64::consts::PI, 0.0),
                ],
            )
            .unwrap()],
        };
        write_obj(&path, &model).unwrap();
        let loaded = load_obj(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn png_quantization_error_is_bounded() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let grid = Grid::from_fn(16, 8, |x, y| {
            let v = (x as f64 * 13.7 + y as f64 * 3.1).sin() * 0.5 + 0.5;
            [v, (v * 0.5).fract(), 1.0 - v]
        });
        save_png(&path, &grid).unwrap();
        let loaded = load_png(&path).unwrap();
        for (x, y, c) in grid.enumerate() {
            let l = loaded.get(x, y);
            for ch in 0..3 {
                assert!(
                    (c[ch] - l[ch]).abs() <= 0.5 / 255.0 + 1e-12,
                    "quantization error too large at ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn eight_bit_values_roundtrip_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let grid = Grid::from_fn(8, 8, |x, y| {
            let k = ((x * 31 + y * 7) % 256) as f64 / 255.0;
            [k, k, k]
        });
        save_png(&path, &grid).unwrap();
        let loaded = load_png(&path).unwrap();
        assert_eq!(grid, loaded);
    }

    #[test]
    fn texture_png_flips_consistently() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("tex.png");
        let tex = Grid::from_fn(4, 3, |x, y| [x as f64 / 3.0, y as f64 / 2.0, 0.0]);
        save_texture_png(&path, &tex).unwrap();
        let loaded = load_texture_png(&path).unwrap();
        for (x, y, c) in tex.enumerate() {
            let l = loaded.get(x, y);
            for ch in 0..3 {
                assert!((c[ch] - l[ch]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn non_orthonormal_camera_is_rejected() {
        let dir = tempdir().unwrap();
        let model = quad_model();
        let photos = vec![Photo {
            id: 0,
            name: "photo_000.png".into(),
            camera: Camera {
                width: 8,
                height: 8,
                fx: 10.0,
                fy: 10.0,
                cx: 3.5,
                cy: 3.5,
                rotation: Matrix3::identity() * 2.0,
                translation: Vector3::new(0.0, 0.0, 1.0),
            },
            rgb: Grid::new(8, 8, [0.5; 3]),
        }];
        write_scene(dir.path(), &model, &photos).unwrap();
        let config = SceneConfig {
            proxy_path: dir.path().join("mesh.obj"),
            camera_file: dir.path().join("cameras.json"),
            photo_dir: dir.path().join("photos"),
            out_dir: PathBuf::new(),
            target_resolution: 256,
            alpha: 1.0,
            beta: 2.0,
            omega: 10.0,
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.99,
            tau: 1e-3,
            tau_w: 0.95,
            lambda_s: 0.5,
            blur_threshold: 50.0,
            incline_limit_deg: 85.0,
            seed: 0,
        };
        let err = load_scene(&config).unwrap_err();
        assert!(err.to_string().contains("non-orthonormal rotation"));
    }

    #[test]
    fn non_planar_face_is_rejected_with_face_index() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.obj");
        fs::write(
            &path,
            "v 0 0 0\nv 1 0 0\nv 1 1 0.4\nv 0 1 0\nf 1 2 3 4\n",
        )
        .unwrap();
        let err = load_obj(&path).unwrap_err();
        match err {
            Error::NonPlanarFace { face, .. } => assert_eq!(face, 0),
            other => panic!("expected NonPlanarFace, got {other:?}"),
        }
    }
}
