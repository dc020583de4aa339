// Client-side shape checks. The rules object comes from GET /api/v1/judging/rules,
// so these checks track the service's own limits.
(function (root, factory) {
  if (typeof module === "object" && module.exports) {
    module.exports = factory();
  } else {
    root.SimValidate = factory();
  }
})(typeof self !== "undefined" ? self : this, function () {
  // Unicode White_Space, which is what the service splits and trims on. The
  // built-in \s and trim() differ on U+0085 and U+FEFF.
  var WS = "\\t\\n\\v\\f\\r \\u0085\\u00a0\\u1680\\u2000-\\u200a\\u2028\\u2029\\u202f\\u205f\\u3000";
  var RUN = new RegExp("[" + WS + "]+");
  var ONLY = new RegExp("^[" + WS + "]*$");

  function words(text) {
    return text.split(RUN).filter(Boolean).length;
  }

  function blank(s) {
    return typeof s !== "string" || ONLY.test(s);
  }

  // Returns null when the submission is acceptable, else a message.
  function validateSubmission(expectedKind, submission, rules) {
    if (!submission || typeof submission !== "object") return "submission must be an object";
    if (rules.kinds.indexOf(submission.kind) < 0) return "unknown task kind " + submission.kind;
    if (submission.kind !== expectedKind) {
      return "expected a " + expectedKind + " submission, got " + submission.kind;
    }
    var n = rules.descriptionsPerPass;
    switch (submission.kind) {
      case "personality-describing": {
        var d = submission.descriptions;
        if (!Array.isArray(d) || d.length !== n) {
          return n + " descriptions required, got " + (Array.isArray(d) ? d.length : 0);
        }
        if (d.some(blank)) return "descriptions must not be empty";
        return null;
      }
      case "description-scoring": {
        var v = submission.verdicts;
        if (!Array.isArray(v) || v.length !== n) {
          return "one verdict per description required (" + n + "), got " + (Array.isArray(v) ? v.length : 0);
        }
        for (var i = 0; i < v.length; i++) {
          if (rules.verdicts.indexOf(v[i]) < 0) return "verdict " + JSON.stringify(v[i]) + " is not allowed";
        }
        return null;
      }
      case "reaction-describing": {
        if (typeof submission.reaction !== "string") return "reaction must be text";
        var w = words(submission.reaction);
        if (w < rules.minReactionWords) {
          return "reaction needs at least " + rules.minReactionWords + " words, got " + w;
        }
        return null;
      }
      case "similarity-scoring":
        if (rules.grades.indexOf(submission.grade) < 0) {
          return "grade " + JSON.stringify(submission.grade) + " is not on the A-E scale";
        }
        return null;
    }
    return "unknown task kind " + submission.kind;
  }

  // The full body of a judging submission.
  function validateJudgment(expectedKind, body, rules) {
    if (!body || blank(body.judge)) return "judge is required";
    return validateSubmission(expectedKind, body.submission, rules);
  }

  function validateDecision(decision) {
    if (!decision || blank(decision.reviewer)) return "reviewer id is empty";
    if (["approve", "edit", "regenerate"].indexOf(decision.verdict) < 0) return "unknown verdict";
    if (decision.verdict === "edit" && blank(decision.text)) return "edit carries no replacement text";
    return null;
  }

  return {
    validateSubmission: validateSubmission,
    validateJudgment: validateJudgment,
    validateDecision: validateDecision,
    words: words,
  };
});
