use std::io::Cursor;

use cezanne::assembler::{assemble_toy, generate_set, GenerationConfig};
use cezanne::meshio::{
    export_obj, export_stl, mesh_primitive, mesh_toy, parse_obj, parse_stl, read_manifest, read_obj, read_stl,
    stl_bytes, write_manifest, Manifest, ManifestConfig, MeshError, Tessellation, TriMesh,
};
use cezanne::primitives::{sample_primitive, PrimitiveKind, Vec3};
use cezanne::rng::stream;

fn f32s(v: &Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

#[test]
fn stl_matches_reference_reader() {
    let toy = assemble_toy(4, &GenerationConfig::default(), &mut stream(3)).unwrap();
    let mesh = mesh_toy(&toy, &Tessellation::default());
    let bytes = stl_bytes(&mesh, false).unwrap();
    let reference = stl_io::read_stl(&mut Cursor::new(&bytes)).unwrap();
    assert_eq!(reference.faces.len(), mesh.triangles.len());
    for (face, tri) in reference.faces.iter().zip(&mesh.triangles) {
        for k in 0..3 {
            assert_eq!(reference.vertices[face.vertices[k]].0, f32s(&mesh.vertices[tri[k] as usize]));
        }
        let [a, b, c] = tri.map(|i| mesh.vertices[i as usize]);
        let n = (b - a).cross(&(c - a)).normalize();
        let got = Vec3::new(face.normal.0[0] as f64, face.normal.0[1] as f64, face.normal.0[2] as f64);
        assert!((got - n).norm() < 1e-6, "normal {got:?} vs {n:?}");
    }
    let ours = parse_stl(&bytes).unwrap();
    assert_eq!(ours.len(), reference.faces.len());
    for (f, r) in ours.iter().zip(&reference.faces) {
        assert_eq!(f.normal, r.normal.0);
    }
}

#[test]
fn reference_reader_accepts_primitive_meshes_as_closed() {
    let ranges = GenerationConfig::default().ranges;
    let mut rng = stream(4);
    for kind in [PrimitiveKind::Cuboid, PrimitiveKind::Sphere, PrimitiveKind::Cylinder, PrimitiveKind::Ring] {
        let mesh = mesh_primitive(&sample_primitive(kind, &ranges, &mut rng).unwrap(), &Tessellation::default());
        let bytes = stl_bytes(&mesh, false).unwrap();
        let reference = stl_io::read_stl(&mut Cursor::new(&bytes)).unwrap();
        reference.validate().unwrap_or_else(|e| panic!("{kind:?}: {e}"));
        assert_eq!(reference.vertices.len(), mesh.vertices.len(), "{kind:?}");
    }
}

#[test]
fn obj_round_trips_exactly() {
    let toy = assemble_toy(5, &GenerationConfig::default(), &mut stream(5)).unwrap();
    let mesh = mesh_toy(&toy, &Tessellation::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.obj");
    export_obj(&mesh, &path).unwrap();
    let back = read_obj(&path).unwrap();
    assert_eq!(back, mesh);
    assert_eq!(parse_obj(&std::fs::read_to_string(&path).unwrap()).unwrap(), mesh);
}

#[test]
fn stl_file_round_trip() {
    let toy = assemble_toy(2, &GenerationConfig::default(), &mut stream(6)).unwrap();
    let mesh = mesh_toy(&toy, &Tessellation::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.stl");
    export_stl(&mesh, &path).unwrap();
    let facets = read_stl(&path).unwrap();
    assert_eq!(facets.len(), mesh.triangles.len());
    assert_eq!(facets[0].vertices[1], f32s(&mesh.vertices[mesh.triangles[0][1] as usize]));
}

#[test]
fn empty_meshes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(stl_bytes(&TriMesh::default(), false), Err(MeshError::EmptyMesh)));
    assert!(stl_bytes(&TriMesh::default(), true).unwrap().len() == 84);
    assert!(export_obj(&TriMesh::default(), &dir.path().join("e.obj")).is_err());
}

#[test]
fn truncated_stl_is_a_parse_error() {
    let mesh = mesh_primitive(&cezanne::primitives::PrimitiveSpec::Sphere { diameter: 0.05 }, &Tessellation::default());
    let bytes = stl_bytes(&mesh, false).unwrap();
    assert!(matches!(parse_stl(&bytes[..bytes.len() - 1]), Err(MeshError::Parse(_))));
}

#[test]
fn manifest_round_trips_and_rejects_other_versions() {
    let cfg = GenerationConfig::default();
    let toys = generate_set(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    let mc = ManifestConfig { generation: cfg, tessellation: Tessellation::default(), caliper_directions: 64 };
    let written = write_manifest(&toys[..20], mc, &path).unwrap();
    let read = read_manifest(&path).unwrap();
    assert_eq!(read, written);
    assert_eq!(read.to_bytes(), std::fs::read(&path).unwrap());
    for (r, t) in read.toys.iter().zip(&toys) {
        assert_eq!(&r.toy(), t);
    }
    let text = String::from_utf8(read.to_bytes()).unwrap().replacen("\"format_version\": \"1\"", "\"format_version\": \"9\"", 1);
    assert!(matches!(Manifest::from_bytes(text.as_bytes()), Err(MeshError::SchemaViolation(_))));
}
