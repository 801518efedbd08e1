#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace raregan {

enum class CodeKind { Dx, Rx, Px };

std::string to_string(CodeKind k);
CodeKind code_kind_from_string(const std::string& s);

// A single medical event token: diagnosis, prescription or procedure.
struct MedicalCode {
  CodeKind kind = CodeKind::Dx;
  std::string id;

  friend bool operator==(const MedicalCode& a, const MedicalCode& b) {
    return a.kind == b.kind && a.id == b.id;
  }
  friend bool operator<(const MedicalCode& a, const MedicalCode& b) {
    return std::tie(a.id, a.kind) < std::tie(b.id, b.kind);
  }
};

enum class Label { Positive, Negative, Unlabeled };

std::string to_string(Label l);
Label label_from_string(const std::string& s);

struct PatientRecord {
  std::string patient_id;
  std::vector<MedicalCode> codes;  // time-ordered
  int age = 0;
  int gender = 0;  // {0, 1}
  Label label = Label::Unlabeled;
};

void to_json(nlohmann::json& j, const MedicalCode& c);
void from_json(const nlohmann::json& j, MedicalCode& c);
void to_json(nlohmann::json& j, const PatientRecord& r);
void from_json(const nlohmann::json& j, PatientRecord& r);

// JSON Lines cohort files, one patient per line.
void write_cohort_jsonl(std::ostream& os, const std::vector<PatientRecord>& cohort);
void write_cohort_jsonl(const std::string& path, const std::vector<PatientRecord>& cohort);
std::vector<PatientRecord> read_cohort_jsonl(std::istream& is);
std::vector<PatientRecord> read_cohort_jsonl(const std::string& path);

}  // namespace raregan
