import { AnnotatorApp } from "./app.js";
import { ServiceClient } from "./client.js";

/** Bootstrap from ?service=<base url>&session=<id> query parameters. */
function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const service = params.get("service") ?? "http://127.0.0.1:8707";
  const session = params.get("session");
  const root = document.getElementById("annotator");
  if (!root) throw new Error("missing #annotator element");
  if (!session) {
    root.textContent = "missing ?session=<id> query parameter";
    return;
  }
  const app = new AnnotatorApp(new ServiceClient(service, session), root);
  app.start();
}

boot();
