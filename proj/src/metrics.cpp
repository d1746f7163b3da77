#include "spdc/metrics.hpp"

#include <cstdio>

namespace spdc::metrics {

MetricReport& MetricReport::operator+=(const MetricReport& o) {
  jsd += o.jsd;
  kl += o.kl;
  mse += o.mse;
  wemd += o.wemd;
  delta_k += o.delta_k;
  mae += o.mae;
  cosine += o.cosine;
  return *this;
}

MetricReport& MetricReport::operator/=(double n) {
  jsd /= n;
  kl /= n;
  mse /= n;
  wemd /= n;
  delta_k /= n;
  mae /= n;
  cosine /= n;
  return *this;
}

std::string MetricReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "jsd = %.9e\nkl = %.9e\nmse = %.9e\n"
                "wemd_separable_w1 = %.9e\ndelta_k = %.9e\nmae = %.9e\n"
                "cosine = %.9f\n",
                jsd, kl, mse, wemd, delta_k, mae, cosine);
  return buf;
}

std::string MetricReport::csv_header() {
  return "jsd,kl,mse,wemd_separable_w1,delta_k,mae,cosine";
}

std::string MetricReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9f", jsd, kl,
                mse, wemd, delta_k, mae, cosine);
  return buf;
}

MetricReport compare(const Eigen::Ref<const Eigen::ArrayXXd>& prediction,
                     const Eigen::Ref<const Eigen::ArrayXXd>& target) {
  MetricReport r;
  r.jsd = jsd(prediction, target);
  r.kl = kl_divergence(target, prediction);
  r.mse = mse(prediction, target);
  r.wemd = wemd(prediction, target);
  r.delta_k = delta_k(prediction, target);
  const Eigen::ArrayXd sp = prediction.colwise().sum().transpose();
  const Eigen::ArrayXd st = target.colwise().sum().transpose();
  r.mae = mae(sp, st);
  r.cosine = cosine_similarity(sp, st);
  return r;
}

}  // namespace spdc::metrics
