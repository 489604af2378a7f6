import { startApp } from "./app";

const root = document.getElementById("app");
if (root) {
  const base = `${location.protocol}//${location.host}`;
  const user = new URLSearchParams(location.search).get("user") ?? "u1";
  startApp(root, base, user).catch((error) => {
    root.textContent = `failed to start: ${error}`;
  });
}
