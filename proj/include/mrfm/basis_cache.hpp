#pragma once

#include "mrfm/matrix_io.hpp"
#include "mrfm/spectral.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <functional>
#include <string>
#include <thread>

namespace mrfm {

// Basis cache file layout (all little-endian):
//
//   offset  size      field
//   0       8         magic "MRFMBAS1"
//   8       4         u32 format version (1)
//   12      4         u32 reserved (0)
//   16      8         u64 n, vertex count
//   24      8         u64 k, number of eigenpairs
//   32      8         u64 content hash of the mesh (see mesh_content_hash)
//   40      8k        f64 eigenvalues, ascending
//   ..      8n        f64 mass (lumped vertex areas)
//   ..      8nk       f64 eigenfunctions, column-major n x k
//   ..      8         u64 FNV-1a checksum over the three f64 arrays
inline constexpr std::array<char, 8> kBasisMagic = {'M', 'R', 'F', 'M', 'B', 'A', 'S', '1'};
inline constexpr std::uint32_t kBasisVersion = 1;

inline std::uint64_t mesh_content_hash(const TriMesh& mesh) {
  Fnv1a h;
  h.update_value(static_cast<std::uint64_t>(mesh.num_vertices()));
  for (const auto& p : mesh.vertices()) h.update(p.data(), 3 * sizeof(double));
  h.update_value(static_cast<std::uint64_t>(mesh.num_triangles()));
  for (const auto& t : mesh.triangles()) h.update(t.data(), 3 * sizeof(int));
  return h.digest();
}

inline void write_basis(const SpectralBasis& basis, std::uint64_t content_hash, const std::filesystem::path& path) {
  // Unique per writer so concurrent workers never share a temporary file.
  const auto tmp = std::filesystem::path(path.string() + "." +
                                         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw validation_error("cannot write basis cache " + tmp.string());
    const std::uint32_t reserved = 0;
    const auto n = static_cast<std::uint64_t>(basis.size());
    const auto k = static_cast<std::uint64_t>(basis.k());
    detail::write_raw(out, kBasisMagic.data(), kBasisMagic.size());
    detail::write_raw(out, &kBasisVersion, 4);
    detail::write_raw(out, &reserved, 4);
    detail::write_raw(out, &n, 8);
    detail::write_raw(out, &k, 8);
    detail::write_raw(out, &content_hash, 8);
    Fnv1a sum;
    detail::write_raw(out, basis.eigenvalues.data(), 8 * k, &sum);
    detail::write_raw(out, basis.mass.data(), 8 * n, &sum);
    const Matrix phi = basis.eigenfunctions;  // ensure column-major contiguous storage
    detail::write_raw(out, phi.data(), 8 * n * k, &sum);
    const std::uint64_t digest = sum.digest();
    detail::write_raw(out, &digest, 8);
    if (!out) throw validation_error("failed writing basis cache " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct CachedBasis {
  SpectralBasis basis;
  std::uint64_t content_hash = 0;
};

/// Reads a basis cache file; throws on any structural or checksum problem.
inline CachedBasis read_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open basis cache " + path.string());
  const std::string name = path.string();
  std::array<char, 8> magic{};
  std::uint32_t version = 0, reserved = 0;
  std::uint64_t n = 0, k = 0;
  CachedBasis out;
  detail::read_raw(in, magic.data(), 8, name);
  if (magic != kBasisMagic) throw validation_error(name + ": not a basis cache file");
  detail::read_raw(in, &version, 4, name);
  detail::read_raw(in, &reserved, 4, name);
  if (version != kBasisVersion) throw validation_error(name + ": unsupported basis cache version");
  detail::read_raw(in, &n, 8, name);
  detail::read_raw(in, &k, 8, name);
  detail::read_raw(in, &out.content_hash, 8, name);
  if (n == 0 || k == 0 || k > n || n > (1ULL << 31)) throw validation_error(name + ": implausible basis dimensions");
  Fnv1a sum;
  out.basis.eigenvalues.resize(static_cast<Index>(k));
  out.basis.mass.resize(static_cast<Index>(n));
  out.basis.eigenfunctions.resize(static_cast<Index>(n), static_cast<Index>(k));
  detail::read_raw(in, out.basis.eigenvalues.data(), 8 * k, name, &sum);
  detail::read_raw(in, out.basis.mass.data(), 8 * n, name, &sum);
  detail::read_raw(in, out.basis.eigenfunctions.data(), 8 * n * k, name, &sum);
  std::uint64_t digest = 0;
  detail::read_raw(in, &digest, 8, name);
  if (digest != sum.digest()) throw validation_error(name + ": checksum mismatch");
  return out;
}

enum class CacheOutcome { hit, computed, recomputed_corrupt };

struct BasisCacheResult {
  SpectralBasis basis;
  CacheOutcome outcome = CacheOutcome::computed;
  std::filesystem::path file;
  std::string warning;  // set when an existing cache file was rejected
};

inline std::filesystem::path basis_cache_path(const std::filesystem::path& cache_dir, const TriMesh& mesh) {
  char key[17];
  std::snprintf(key, sizeof(key), "%016llx", static_cast<unsigned long long>(mesh_content_hash(mesh)));
  return cache_dir / (std::string(key) + ".basis");
}

/// Returns a basis of resolution k for `mesh`, using `cache_dir` when given.
/// A cached basis with at least k eigenpairs for the same content is truncated;
/// missing, short or corrupt caches trigger an eigensolve and a rewrite.
inline BasisCacheResult cached_eigenbasis(const TriMesh& mesh, Index k, const std::filesystem::path& cache_dir,
                                          const EigensolverOptions& opt = {}) {
  BasisCacheResult result;
  if (k > mesh.num_vertices())
    throw validation_error("requested " + std::to_string(k) + " eigenpairs but the mesh has only " +
                           std::to_string(mesh.num_vertices()) + " vertices");
  if (cache_dir.empty()) {
    result.basis = eigenbasis(mesh, k, opt);
    return result;
  }
  std::filesystem::create_directories(cache_dir);
  const std::uint64_t key = mesh_content_hash(mesh);
  result.file = basis_cache_path(cache_dir, mesh);
  bool corrupt = false;
  if (std::filesystem::exists(result.file)) {
    try {
      CachedBasis cached = read_basis(result.file);
      if (cached.content_hash == key && cached.basis.size() == mesh.num_vertices()) {
        if (cached.basis.k() >= k) {
          result.basis = truncate(cached.basis, k);
          result.outcome = CacheOutcome::hit;
          return result;
        }
      } else {
        corrupt = true;
        result.warning = result.file.string() + ": content hash mismatch";
      }
    } catch (const Error& e) {
      corrupt = true;
      result.warning = e.what();
    }
  }
  result.basis = eigenbasis(mesh, k, opt);
  result.outcome = corrupt ? CacheOutcome::recomputed_corrupt : CacheOutcome::computed;
  write_basis(result.basis, key, result.file);
  return result;
}

}  // namespace mrfm
