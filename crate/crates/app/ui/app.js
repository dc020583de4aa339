(function () {
  var API = "/api/v1";
  var rules = null;
  var $ = function (id) { return document.getElementById(id); };

  function el(tag, attrs, children) {
    var e = document.createElement(tag);
    Object.keys(attrs || {}).forEach(function (k) {
      if (k === "text") e.textContent = attrs[k];
      else if (k.slice(0, 2) === "on") e.addEventListener(k.slice(2), attrs[k]);
      else e.setAttribute(k, attrs[k]);
    });
    (children || []).forEach(function (c) { if (c) e.appendChild(c); });
    return e;
  }

  function status(msg, isError) {
    var s = $("status");
    s.textContent = msg || "";
    s.className = isError ? "error" : "";
  }

  function who() { return $("who").value.trim(); }

  function call(method, path, body) {
    return fetch(API + path, {
      method: method,
      headers: body ? { "Content-Type": "application/json" } : {},
      body: body ? JSON.stringify(body) : undefined,
    }).then(function (r) {
      return r.json().then(function (data) {
        if (!r.ok) throw new Error(data.message || data.error || r.statusText);
        return data;
      });
    });
  }

  function list(items, label, open) {
    var ul = el("ul");
    items.forEach(function (it) { ul.appendChild(el("li", { text: label(it), onclick: function () { open(it); } })); });
    var box = $("list");
    box.replaceChildren(items.length ? ul : el("p", { text: "Nothing here." }));
  }

  function block(title, text) {
    if (!text) return null;
    return el("div", {}, [el("h3", { text: title }), el("pre", { text: text })]);
  }

  // Story and profile reviews.
  function showReviews() {
    $("detail").replaceChildren();
    call("GET", "/reviews?state=pending").then(function (d) {
      list(d.tasks, function (t) { return t.id; }, openReview);
    }).catch(function (e) { status(e.message, true); });
  }

  function openReview(task) {
    var edit = el("textarea", {});
    edit.value = task.request.candidate;
    function decide(verdict) {
      var body = { verdict: verdict, reviewer: who() };
      if (verdict === "edit") body.text = edit.value;
      var problem = SimValidate.validateDecision(body);
      if (problem) return status(problem, true);
      call("POST", "/reviews/" + encodeURIComponent(task.id) + "/decision", body)
        .then(function (r) {
          status("Decided " + r.task.id + (r.resumedRuns.length ? "; resumed " + r.resumedRuns.join(", ") : ""));
          showReviews();
        })
        .catch(function (e) { status(e.message, true); });
    }
    function claim() {
      if (!who()) return status("reviewer id is empty", true);
      call("POST", "/reviews/" + encodeURIComponent(task.id) + "/claim", { reviewer: who() })
        .then(function () { status("Claimed " + task.id); })
        .catch(function (e) { status(e.message, true); });
    }
    $("detail").replaceChildren(
      el("h2", { text: task.id + (task.claimedBy ? " (claimed by " + task.claimedBy + ")" : "") }),
      block("Original", task.request.original) || el("span"),
      block("Candidate", task.request.candidate) || el("span"),
      el("h3", { text: "Edited text" }),
      edit,
      el("p", {}, [
        el("button", { text: "Claim", onclick: claim }),
        el("button", { text: "Approve", onclick: function () { decide("approve"); } }),
        el("button", { text: "Submit edit", onclick: function () { decide("edit"); } }),
        el("button", { text: "Regenerate", onclick: function () { decide("regenerate"); } }),
      ])
    );
  }

  // Judging. Views show only the task payload, never which method produced it.
  function showJudging() {
    $("detail").replaceChildren();
    if (!who()) return status("enter your judge id first", true);
    call("GET", "/judging/tasks?state=pending&judge=" + encodeURIComponent(who())).then(function (d) {
      list(d.tasks, function (t) { return t.kind + " " + t.caseId; }, openJudging);
    }).catch(function (e) { status(e.message, true); });
  }

  function form(kind) {
    var n = rules.descriptionsPerPass;
    var fields = [];
    var collect;
    if (kind === "personality-describing") {
      for (var i = 0; i < n; i++) fields.push(el("input", { placeholder: "description " + (i + 1) }));
      collect = function () { return { kind: kind, descriptions: fields.map(function (f) { return f.value; }) }; };
    } else if (kind === "description-scoring") {
      for (var j = 0; j < n; j++) {
        fields.push(el("select", {}, [el("option", { value: "", text: "verdict " + (j + 1) })].concat(
          rules.verdicts.map(function (v) { return el("option", { value: v, text: v }); }))));
      }
      collect = function () { return { kind: kind, verdicts: fields.map(function (f) { return f.value; }) }; };
    } else if (kind === "reaction-describing") {
      fields.push(el("textarea", { placeholder: "at least " + rules.minReactionWords + " words" }));
      collect = function () { return { kind: kind, reaction: fields[0].value }; };
    } else {
      fields.push(el("select", {}, [el("option", { value: "", text: "grade" })].concat(
        rules.grades.map(function (g) { return el("option", { value: g, text: g }); }))));
      collect = function () { return { kind: kind, grade: fields[0].value }; };
    }
    return { fields: fields, collect: collect };
  }

  function openJudging(task) {
    var p = task.payload;
    var f = form(task.kind);
    function submit() {
      var body = { judge: who(), submission: f.collect() };
      var problem = SimValidate.validateJudgment(task.kind, body, rules);
      if (problem) return status(problem, true);
      call("POST", "/judging/tasks/" + encodeURIComponent(task.id) + "/submission", body)
        .then(function (r) {
          status("Submitted" + (r.caseComplete ? "; case complete, report updated" : ""));
          showJudging();
        })
        .catch(function (e) { status(e.message, true); });
    }
    var descs = p.descriptions && p.descriptions.length
      ? p.descriptions.map(function (d, i) { return (i + 1) + ". " + d; }).join("\n") : "";
    $("detail").replaceChildren.apply($("detail"), [
      el("h2", { text: task.kind }),
      el("p", { text: p.guideline }),
      block("Scenario", p.scenario),
      block("Target", p.target),
      block("Response", p.response),
      block("Other reaction", p.reaction),
      block("Descriptions", descs),
    ].filter(Boolean).concat(f.fields.map(function (x) { return el("div", {}, [x]); }),
      [el("button", { text: "Submit", onclick: submit })]));
  }

  // Refresh period for the runs view, from ?poll=<ms>; 0 turns it off.
  var poll = parseInt(new URLSearchParams(location.search).get("poll") || "3000", 10);
  var timer = null;
  var openRun = null;

  function showRunDetail(r) {
    openRun = r.id;
    $("detail").replaceChildren(el("pre", { text: JSON.stringify(r, null, 2) }));
  }

  function refreshRuns() {
    return call("GET", "/runs").then(function (d) {
      list(d.runs.slice().reverse(), function (r) { return r.id + " " + r.state; }, showRunDetail);
      var current = d.runs.filter(function (r) { return r.id === openRun; })[0];
      if (current) showRunDetail(current);
    }).catch(function (e) { status(e.message, true); });
  }

  function showRuns() {
    openRun = null;
    $("detail").replaceChildren();
    refreshRuns();
    if (poll > 0) timer = setInterval(refreshRuns, poll);
  }

  var views = { reviews: showReviews, judging: showJudging, runs: showRuns };
  document.querySelectorAll("nav button").forEach(function (b) {
    b.addEventListener("click", function () {
      clearInterval(timer);
      status("");
      views[b.dataset.view]();
    });
  });
  $("who").value = localStorage.getItem("who") || "";
  $("who").addEventListener("change", function () { localStorage.setItem("who", who()); });
  call("GET", "/judging/rules").then(function (r) { rules = r; showReviews(); })
    .catch(function (e) { status(e.message, true); });
})();
