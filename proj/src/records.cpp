#include "raregan/records.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace raregan {

std::string to_string(CodeKind k) {
  switch (k) {
    case CodeKind::Dx: return "Dx";
    case CodeKind::Rx: return "Rx";
    case CodeKind::Px: return "Px";
  }
  throw std::invalid_argument("unknown code kind");
}

CodeKind code_kind_from_string(const std::string& s) {
  if (s == "Dx") return CodeKind::Dx;
  if (s == "Rx") return CodeKind::Rx;
  if (s == "Px") return CodeKind::Px;
  throw std::invalid_argument("unknown code kind: " + s);
}

std::string to_string(Label l) {
  switch (l) {
    case Label::Positive: return "positive";
    case Label::Negative: return "negative";
    case Label::Unlabeled: return "unlabeled";
  }
  throw std::invalid_argument("unknown label");
}

Label label_from_string(const std::string& s) {
  if (s == "positive") return Label::Positive;
  if (s == "negative") return Label::Negative;
  if (s == "unlabeled") return Label::Unlabeled;
  throw std::invalid_argument("unknown label: " + s);
}

void to_json(nlohmann::json& j, const MedicalCode& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)}, {"id", c.id}};
}

void from_json(const nlohmann::json& j, MedicalCode& c) {
  c.kind = code_kind_from_string(j.at("kind").get<std::string>());
  c.id = j.at("id").get<std::string>();
  if (c.id.empty()) throw std::invalid_argument("medical code id is empty");
}

void to_json(nlohmann::json& j, const PatientRecord& r) {
  j = nlohmann::json{{"patient_id", r.patient_id},
                     {"codes", r.codes},
                     {"age", r.age},
                     {"gender", r.gender},
                     {"label", to_string(r.label)}};
}

void from_json(const nlohmann::json& j, PatientRecord& r) {
  r.patient_id = j.at("patient_id").get<std::string>();
  r.codes = j.at("codes").get<std::vector<MedicalCode>>();
  r.age = j.at("age").get<int>();
  r.gender = j.at("gender").get<int>();
  r.label = label_from_string(j.at("label").get<std::string>());
  if (r.codes.empty()) {
    throw std::invalid_argument("patient " + r.patient_id + " has no codes");
  }
  if (r.age < 0 || r.age > 120) {
    throw std::invalid_argument("patient " + r.patient_id + " has age " +
                                std::to_string(r.age));
  }
  if (r.gender != 0 && r.gender != 1) {
    throw std::invalid_argument("patient " + r.patient_id + " has gender " +
                                std::to_string(r.gender));
  }
}

void write_cohort_jsonl(std::ostream& os, const std::vector<PatientRecord>& cohort) {
  for (const PatientRecord& r : cohort) {
    nlohmann::json j = r;
    os << j.dump() << "\n";
  }
}

void write_cohort_jsonl(const std::string& path,
                        const std::vector<PatientRecord>& cohort) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_cohort_jsonl(os, cohort);
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

std::vector<PatientRecord> read_cohort_jsonl(std::istream& is) {
  std::vector<PatientRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<PatientRecord>());
    } catch (const std::exception& e) {
      throw std::runtime_error("cohort line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return out;
}

std::vector<PatientRecord> read_cohort_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_cohort_jsonl(is);
}

}  // namespace raregan
