#include "cca/crossmodal.hpp"

#include <fstream>
#include <json.hpp>

#include "cca/error.hpp"
#include "cca/featurepack.hpp"

namespace cca {

namespace {

void require_dim(const Mat& m, const CrossModalHead& head, const char* what) {
  if (m.cols() != head.text_weights.cols())
    throw Error(ErrorKind::DimensionMismatch, std::string(what) + " has " +
                                                  std::to_string(m.cols()) +
                                                  " columns, text weights have " +
                                                  std::to_string(head.text_weights.cols()));
}

}  // namespace

Mat softmax_rows(const Mat& scores) {
  Mat out = scores.colwise() - scores.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  const Vec sums = out.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * out;
}

Mat text_attention(const CrossModalHead& head, const FusionContext& ctx) {
  require_dim(ctx.kv_features, head, "fusion context");
  if (ctx.kv_features.rows() == 0)
    throw Error(ErrorKind::InvalidArgument, "fusion context is empty");
  return softmax_rows(head.attn_scale * head.text_weights * ctx.kv_features.transpose());
}

Mat image_attention(const Mat& query, const CrossModalHead& head) {
  require_dim(query, head, "query");
  return softmax_rows(head.attn_scale * query * head.text_weights.transpose());
}

Mat clip_logits(const Mat& query, const CrossModalHead& head) {
  require_dim(query, head, "query");
  return head.clip_scale * query * head.text_weights.transpose();
}

Mat fuse_text(const CrossModalHead& head, const FusionContext& ctx) {
  return (text_attention(head, ctx) * ctx.kv_features).transpose();
}

Mat fuse_image(const Mat& query, const CrossModalHead& head) {
  return image_attention(query, head) * head.text_weights;
}

CrossModalTerms crossmodal_terms(const Mat& query, const CrossModalHead& head,
                                 const FusionContext& ctx) {
  CrossModalTerms terms;
  terms.clip = clip_logits(query, head);
  terms.text_fused = query * fuse_text(head, ctx);
  terms.image_fused = fuse_image(query, head) * head.text_weights.transpose();
  return terms;
}

Mat assemble_l2(const CrossModalTerms& terms, double gamma, double eta) {
  return terms.clip + gamma * terms.text_fused + eta * terms.image_fused;
}

Mat crossmodal_logits(const Mat& query, const CrossModalHead& head, const FusionContext& ctx) {
  return assemble_l2(crossmodal_terms(query, head, ctx), head.gamma, head.eta);
}

void save_head(const CrossModalHead& head, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_matrix(head.text_weights, dir / "text_weights.ccaf");
  nlohmann::json j;
  j["gamma"] = head.gamma;
  j["eta"] = head.eta;
  j["clip_scale"] = head.clip_scale;
  j["attn_scale"] = head.attn_scale;
  std::ofstream out(dir / "head.json");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "head.json").string());
  out << j.dump(2) << '\n';
}

CrossModalHead load_head(const std::filesystem::path& dir) {
  CrossModalHead head;
  head.text_weights = read_matrix(dir / "text_weights.ccaf");
  std::ifstream in(dir / "head.json");
  if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / "head.json").string());
  try {
    nlohmann::json j;
    in >> j;
    head.gamma = j.at("gamma").get<double>();
    head.eta = j.at("eta").get<double>();
    head.clip_scale = j.at("clip_scale").get<double>();
    head.attn_scale = j.at("attn_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "head.json: " + std::string(e.what()));
  }
  return head;
}

}  // namespace cca
