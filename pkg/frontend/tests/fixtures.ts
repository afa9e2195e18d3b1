// Compact typed fixtures for unit tests; integration tests use the real
// service instead.

import type { IncidentDetail, IncidentSummary, SchemaField } from "../src/api.js";

export const SCHEMA_FIELDS: SchemaField[] = [
  { name: "1. Name of Railroad", answer_places: { value: { answer_type: "text" } } },
  {
    name: "6. Time of Accident/Incident",
    answer_places: {
      Time: { answer_type: "digit" },
      "AM/PM": { answer_type: "choice", choices: { AM: "AM", PM: "PM" } },
    },
  },
  {
    name: "15. Direction of Highway User",
    answer_places: {
      value: {
        answer_type: "choice",
        choices: { N: "North", S: "South", E: "East", W: "West" },
      },
    },
  },
  {
    name: "20. Sex of Highway User",
    answer_places: { value: { answer_type: "choice", choices: { M: "Male", F: "Female" } } },
  },
];

export const GROUPING: Record<string, string[]> = {
  "time & location": ["1", "6"],
  "highway user": ["15", "20"],
};

export function incidentDetail(): IncidentDetail {
  return {
    article_id: "sample-incident",
    matched_record_id: "R0001",
    linkage_decision: "matched",
    day_offset: 1,
    form: {
      "1/value": { type: "text", value: "Pacific Western", raw_model_text: "Pacific Western" },
      "6/Time": { type: "digit", value: "1430", raw_model_text: "2:30 PM" },
      "6/AM-PM": { type: "choice", value: "PM", raw_model_text: "PM" },
      "15/value": { type: "choice", value: "N", raw_model_text: "heading north" },
      "20/value": { type: "unknown", value: null, raw_model_text: "Unknown" },
    },
    verdicts: [
      {
        key: "6/Time",
        verdict: "Match",
        rule_applied: "TimeTolerance",
        answerable: true,
        has_ground_truth: true,
        gold: "14:30",
        pred_text: "2:30 PM",
        article_id: "sample-incident",
      },
      {
        key: "1/value",
        verdict: "NoGroundTruth",
        rule_applied: "FuzzyText",
        answerable: true,
        has_ground_truth: false,
        gold: null,
        pred_text: "Pacific Western",
        article_id: "sample-incident",
      },
    ],
    grouping_used: GROUPING,
    answerable: ["1/value", "6/Time", "15/value"],
  };
}

export function incidentList(): IncidentSummary[] {
  return [
    {
      article_id: "sample-incident",
      matched_record_id: "R0001",
      linkage_decision: "matched",
      has_form: true,
      n_answers: 5,
      n_unknown: 1,
    },
    {
      article_id: "second-incident",
      matched_record_id: null,
      linkage_decision: "unmatched",
      has_form: false,
      n_answers: 0,
      n_unknown: 0,
    },
  ];
}
