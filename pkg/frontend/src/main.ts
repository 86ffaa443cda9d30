import { ApiClient } from "./api.js";
import { App } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base =
  params.get("api") ?? (window as { __API_BASE__?: string }).__API_BASE__ ?? "";

const root = document.getElementById("app");
if (root) {
  void new App(root, new ApiClient(base)).start();
}
